//! Byte-exact comparison of every writer against committed golden files.

use invrend::grid::OccupancyGrid;
use invrend::image::{Image, Mask};
use invrend::io;
use invrend::mesh::TexturedMesh;
use invrend::vec3::Vec3;
use std::path::PathBuf;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn assert_bytes_match(written: &std::path::Path, golden: &str) {
    let got = std::fs::read(written).unwrap();
    let want = std::fs::read(data(golden)).unwrap();
    assert_eq!(got, want, "{golden} drifted from the committed bytes");
}

#[test]
fn vox_writer_matches_golden() {
    let values: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
    let grid = OccupancyGrid::new(2, values).unwrap();
    let out = std::env::temp_dir().join("invrend-golden.vox");
    io::write_vox(&out, &io::VoxData::from_occupancy(&grid)).unwrap();
    assert_bytes_match(&out, "golden.vox");
}

#[test]
fn obj_writer_matches_golden() {
    let mesh = TexturedMesh::with_colors(
        vec![
            Vec3::new(-0.25f64, 0.0, 0.125),
            Vec3::new(0.5, -0.375, 0.0),
            Vec3::new(0.0, 0.625, -0.5),
        ],
        vec![[0, 1, 2]],
        vec![[0.25, 0.5, 0.75], [1.0, 0.0, 0.5], [0.0, 1.0, 0.125]],
    )
    .unwrap();
    let out = std::env::temp_dir().join("invrend-golden.obj");
    io::write_obj(&out, &mesh).unwrap();
    assert_bytes_match(&out, "golden.obj");
}

#[test]
fn image_writers_match_golden() {
    let img = Image::from_data(2, 2, (0..12).map(|i| i as f64 / 11.0).collect()).unwrap();
    let out = std::env::temp_dir().join("invrend-golden.ppm");
    io::write_image(&out, &img).unwrap();
    assert_bytes_match(&out, "golden.ppm");

    let mask = Mask::from_data(2, 2, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
    let mout = std::env::temp_dir().join("invrend-golden.pgm");
    io::write_mask(&mout, &mask).unwrap();
    assert_bytes_match(&mout, "golden.pgm");
}

#[test]
fn golden_files_parse_back() {
    let grid: OccupancyGrid<f64> = io::read_vox(data("golden.vox"))
        .unwrap()
        .into_occupancy()
        .unwrap();
    assert_eq!(grid.resolution(), 2);
    let mesh: TexturedMesh<f64> = io::read_obj(data("golden.obj")).unwrap();
    assert_eq!(mesh.face_count(), 1);
    let img: Image<f64> = io::read_image(data("golden.ppm")).unwrap();
    assert_eq!((img.width, img.height), (2, 2));
    let mask: Mask<f64> = io::read_mask(data("golden.pgm")).unwrap();
    assert_eq!((mask.width, mask.height), (2, 2));
}
