//! Built-in skeleton topologies.
//!
//! The two depth-sensor joint layouts used throughout the crate. Joint
//! indices follow the vendor SDK order; the bone lists are the standard
//! anatomical trees over those indices and are the ground truth for all
//! built-in adjacency structures.

use super::SkeletonTopology;

/// Kinect v1 joint indices (20 joints).
///
/// 0 hip center, 1 spine, 2 shoulder center, 3 head,
/// 4 shoulder left, 5 elbow left, 6 wrist left, 7 hand left,
/// 8 shoulder right, 9 elbow right, 10 wrist right, 11 hand right,
/// 12 hip left, 13 knee left, 14 ankle left, 15 foot left,
/// 16 hip right, 17 knee right, 18 ankle right, 19 foot right.
pub const KINECT_V1_JOINTS: usize = 20;

/// The 19 bones of the Kinect v1 skeleton tree.
pub const KINECT_V1_BONES: [(usize, usize); 19] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (2, 4),
    (4, 5),
    (5, 6),
    (6, 7),
    (2, 8),
    (8, 9),
    (9, 10),
    (10, 11),
    (0, 12),
    (12, 13),
    (13, 14),
    (14, 15),
    (0, 16),
    (16, 17),
    (17, 18),
    (18, 19),
];

pub const KINECT_V1_CENTER: usize = 0;

/// Shoulder center: the top of the spine chain, used for scale normalization.
pub const KINECT_V1_SPINE_TIP: usize = 2;

/// Kinect v2 joint indices (25 joints).
///
/// 0 spine base, 1 spine mid, 2 neck, 3 head,
/// 4 shoulder left, 5 elbow left, 6 wrist left, 7 hand left,
/// 8 shoulder right, 9 elbow right, 10 wrist right, 11 hand right,
/// 12 hip left, 13 knee left, 14 ankle left, 15 foot left,
/// 16 hip right, 17 knee right, 18 ankle right, 19 foot right,
/// 20 spine shoulder, 21 hand tip left, 22 thumb left,
/// 23 hand tip right, 24 thumb right.
pub const KINECT_V2_JOINTS: usize = 25;

/// The 24 bones of the Kinect v2 skeleton tree.
pub const KINECT_V2_BONES: [(usize, usize); 24] = [
    (0, 1),
    (1, 20),
    (20, 2),
    (2, 3),
    (20, 4),
    (4, 5),
    (5, 6),
    (6, 7),
    (20, 8),
    (8, 9),
    (9, 10),
    (10, 11),
    (0, 12),
    (12, 13),
    (13, 14),
    (14, 15),
    (0, 16),
    (16, 17),
    (17, 18),
    (18, 19),
    (7, 21),
    (7, 22),
    (11, 23),
    (11, 24),
];

pub const KINECT_V2_CENTER: usize = 0;

/// Spine shoulder: the top of the spine chain, used for scale normalization.
pub const KINECT_V2_SPINE_TIP: usize = 20;

/// The 20-joint Kinect v1 topology, centered at the hip center.
pub fn kinect_v1() -> SkeletonTopology {
    SkeletonTopology::new(KINECT_V1_JOINTS, KINECT_V1_BONES.to_vec(), KINECT_V1_CENTER)
        .expect("built-in v1 topology is valid")
        .with_spine_tip(KINECT_V1_SPINE_TIP)
}

/// The 25-joint Kinect v2 topology, centered at the spine base.
pub fn kinect_v2() -> SkeletonTopology {
    SkeletonTopology::new(KINECT_V2_JOINTS, KINECT_V2_BONES.to_vec(), KINECT_V2_CENTER)
        .expect("built-in v2 topology is valid")
        .with_spine_tip(KINECT_V2_SPINE_TIP)
}

/// Returns the built-in topology for a joint count, if one exists.
pub fn for_joint_count(joints: usize) -> Option<SkeletonTopology> {
    match joints {
        KINECT_V1_JOINTS => Some(kinect_v1()),
        KINECT_V2_JOINTS => Some(kinect_v2()),
        _ => None,
    }
}
