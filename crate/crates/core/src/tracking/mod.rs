//! Frame-to-frame face linking.
//!
//! Detections of consecutive frames are matched by minimum-cost bipartite
//! assignment over negated IoU scores. Only location is used; in classroom
//! footage participants mostly stay in their seats within a scene.

mod hungarian;
mod iou;
mod linker;

pub use hungarian::{hungarian_assign, Assignment, CostMatrix};
pub use iou::iou;
pub use linker::{link_recording, link_tracklets, orphan_tracklets, LinkResult, TrackerConfig};
