#![cfg(feature = "idx")]

use dictator_core::data::idx::{encode_pair, load_idx};

#[test]
fn load_from_disk_with_limit() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..5 * 2 * 3).map(|i| (i * 8) as u8).collect();
    let labels = [3u8, 1, 4, 1, 5];
    let (img, lab) = encode_pair(2, 3, &pixels, &labels);
    let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    std::fs::write(&ip, img).unwrap();
    std::fs::write(&lp, lab).unwrap();

    let all = load_idx(&ip, &lp, 100).unwrap();
    assert_eq!(all.rows(), 5);
    assert_eq!(all.dim(), 6);
    assert_eq!(all.labels(), &[3, 1, 4, 1, 5]);
    // pixels scaled into [0, 1]
    assert!(all.features().iter().all(|v| (0.0..=1.0).contains(v)));

    let two = load_idx(&ip, &lp, 2).unwrap();
    assert_eq!(two.rows(), 2);
    assert_eq!(two.row(1), all.row(1));

    assert!(load_idx(dir.path().join("missing"), &lp, 2).is_err());
    assert!(load_idx(&lp, &ip, 2).is_err());
}
