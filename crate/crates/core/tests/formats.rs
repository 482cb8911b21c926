use std::path::PathBuf;

use protogs::io::{read_colmap_points, read_ply};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(serde::Deserialize)]
struct Expected {
    position: [f64; 3],
    rotation: [f64; 4],
    log_scale: [f64; 3],
    opacity_raw: f64,
    sh: Vec<[f64; 3]>,
}

#[test]
fn reads_reference_checkpoint() {
    let set = read_ply(&fixture("gs_degree3.ply")).unwrap();
    let text = std::fs::read_to_string(fixture("gs_degree3.json")).unwrap();
    let expected: Vec<Expected> = serde_json::from_str(&text).unwrap();
    assert_eq!(set.sh_degree, 3);
    assert_eq!(set.len(), expected.len());
    for (p, e) in set.primitives.iter().zip(&expected) {
        assert_eq!(p.position.as_slice(), &e.position);
        assert_eq!(p.rotation, e.rotation);
        assert_eq!(p.log_scale.as_slice(), &e.log_scale);
        assert_eq!(p.opacity_raw, e.opacity_raw);
        let sh: Vec<[f64; 3]> = p.sh_coeffs.iter().map(|c| [c.x, c.y, c.z]).collect();
        assert_eq!(sh, e.sh);
    }
}

#[test]
fn colmap_text_and_binary_agree() {
    let text = read_colmap_points(&fixture("points3D.txt")).unwrap();
    let binary = read_colmap_points(&fixture("points3D.bin")).unwrap();
    assert_eq!(text.len(), 13);
    assert_eq!(text, binary);
    let last = text.len() - 1;
    assert_eq!(text.ids[last], 424242);
    assert_eq!(text.positions[last].as_slice(), &[0.5, -1.25, 3.0]);
    assert_eq!(text.colors[last], [0, 128, 255]);
}
