use std::sync::Arc;

use crate::geometry::Image;
use crate::octree::Octree;

/// Length of the proprioceptive vector: gripper position (3), rotation in
/// the two-column 6D representation (6), and the open/closed state (1).
pub const PROPRIO_DIM: usize = 10;

/// Visual payload of one observation frame.
#[derive(Debug, Clone)]
pub enum ObsData {
    Octree(Octree),
    Image { depth: Image, intensity: Image },
}

/// One rendered frame plus the proprioceptive state at capture time.
#[derive(Debug, Clone)]
pub struct Frame {
    pub data: ObsData,
    pub proprio: [f32; PROPRIO_DIM],
}

/// Two temporally stacked frames; `frames[0]` is the older one. A reset
/// duplicates the initial frame into both slots.
#[derive(Debug, Clone)]
pub struct Observation {
    pub frames: [Arc<Frame>; 2],
}

impl Observation {
    pub fn initial(frame: Frame) -> Observation {
        let f = Arc::new(frame);
        Observation {
            frames: [Arc::clone(&f), f],
        }
    }

    /// Shift the stack: the previous current frame becomes the older one.
    pub fn advance(&self, frame: Frame) -> Observation {
        Observation {
            frames: [Arc::clone(&self.frames[1]), Arc::new(frame)],
        }
    }
}
