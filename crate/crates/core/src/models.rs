//! Example programs shipped with the crate.

pub const BOX: &str = include_str!("../models/box.dcad");
pub const BOX_FREE_DEPTH: &str = include_str!("../models/box_free_depth.dcad");
pub const MOUNT: &str = include_str!("../models/mount.dcad");
pub const COUPLED_CYLINDER: &str = include_str!("../models/coupled_cylinder.dcad");
pub const DRESSER: &str = include_str!("../models/dresser.dcad");

/// `(name, source)` for every bundled model.
pub const ALL: &[(&str, &str)] = &[
    ("box", BOX),
    ("box_free_depth", BOX_FREE_DEPTH),
    ("mount", MOUNT),
    ("coupled_cylinder", COUPLED_CYLINDER),
    ("dresser", DRESSER),
];

pub fn by_name(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
