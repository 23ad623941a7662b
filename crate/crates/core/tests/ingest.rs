use lsnet_core::ingest::{parse_coco, synth_shapes, write_dataset, ShapeFamily};
use lsnet_core::landmarks::{Keypoint, KeypointInstance};
use proptest::prelude::*;

#[test]
fn unknown_fields_are_ignored() {
    let doc = br#"{
        "info": {"description": "toy", "year": 2017, "extra": {"nested": [1, 2]}},
        "licenses": [{"id": 1}],
        "images": [{"id": 1, "width": 10, "height": 10, "flickr_url": "x"}],
        "annotations": [{
            "id": 5, "image_id": 1, "category_id": 3, "iscrowd": 0, "area": 4.0,
            "bbox": [1, 1, 2, 2], "segmentation": [[1, 1, 3, 1, 3, 3, 1, 3]],
            "attributes": {"occluded": false}
        }],
        "categories": [{"id": 3, "name": "box", "supercategory": "shape"}],
        "future": null
    }"#;
    let ds = parse_coco(doc).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.records[0].instance_id, 5);
    assert_eq!(ds.source, "toy");
}

fn with_keypoints(seed: u64, count: usize, family: ShapeFamily, visibility: &[u8]) -> lsnet_core::ingest::Dataset {
    let mut ds = synth_shapes(count, seed, family).unwrap();
    for (i, r) in ds.records.iter_mut().enumerate() {
        let bb = r.bbox.unwrap();
        let pts = (0..17)
            .map(|k| Keypoint {
                x: bb.x_min + bb.width() * k as f64 / 16.0,
                y: bb.y_min + bb.height() * 0.5,
                visibility: visibility[(i + k) % visibility.len()],
            })
            .collect();
        r.keypoints = Some(KeypointInstance::new(pts, (bb.width() * bb.height()).sqrt()).unwrap());
    }
    ds
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn write_parse_round_trip(
        seed in any::<u64>(),
        count in 1usize..12,
        family in prop_oneof![Just(ShapeFamily::Convex), Just(ShapeFamily::Star), Just(ShapeFamily::MultiPart)],
        visibility in prop::collection::vec(0u8..=2, 1..5),
    ) {
        let ds = with_keypoints(seed, count, family, &visibility);
        for r in &ds.records {
            for p in &r.parts {
                prop_assert!(p.len() >= 3 && p.area() > 0.0);
            }
        }
        let back = parse_coco(&write_dataset(&ds)).unwrap();
        prop_assert_eq!(back.len(), ds.len());
        for (a, b) in ds.records.iter().zip(&back.records) {
            prop_assert_eq!(a.instance_id, b.instance_id);
            prop_assert_eq!(a.parts.len(), b.parts.len());
            for (pa, pb) in a.parts.iter().zip(&b.parts) {
                prop_assert_eq!(pa.vertices(), pb.vertices());
            }
            let vis = |k: &Option<KeypointInstance>| -> Vec<u8> {
                k.as_ref().unwrap().points().iter().map(|p| p.visibility).collect()
            };
            prop_assert_eq!(vis(&a.keypoints), vis(&b.keypoints));
        }
        prop_assert_eq!(write_dataset(&back), write_dataset(&ds));
    }
}
