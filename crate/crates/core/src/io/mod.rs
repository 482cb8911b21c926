//! Reading and writing scenes: PLY primitives, COLMAP points, PNG images,
//! scene directories, CSV logs, and synthetic scene generation.

pub mod colmap;
pub mod logs;
pub mod ply;
pub mod scene;
pub mod synthetic;

pub use colmap::{read_colmap_points, write_points3d_binary, write_points3d_text, ColmapPoints};
pub use ply::{read_ply, read_ply_bytes, write_ply, write_ply_bytes, PlyPrecision};
pub use scene::{read_png, write_png, SceneBundle};
pub use synthetic::{generate_synthetic_scene, random_primitive, random_set, SyntheticSpec};
