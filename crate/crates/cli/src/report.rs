use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Report<'a, C, S, R> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config_echo: &'a C,
    pub summary: &'a S,
    pub rows: &'a [R],
}

/// A report serialized as JSON plus its rows as CSV.
#[derive(Debug)]
pub struct Rendered {
    pub json: String,
    pub csv: Vec<u8>,
}

pub fn render<C: Serialize, S: Serialize, R: Serialize>(
    command: &str,
    config_echo: &C,
    summary: &S,
    rows: &[R],
    headers: &[&str],
) -> Result<Rendered, String> {
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command,
        config_echo,
        summary,
        rows,
    };
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    json.push('\n');

    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(headers).map_err(|e| e.to_string())?;
    for r in rows {
        w.serialize(r).map_err(|e| e.to_string())?;
    }
    let csv = w.into_inner().map_err(|e| e.to_string())?;
    Ok(Rendered { json, csv })
}
