use crate::error::{Error, Result};

/// The eight-class scene taxonomy. Codes are stable across every file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum SemanticClass {
    #[default]
    NoLabel = 0,
    NormalGround = 1,
    Stair = 2,
    Door = 3,
    Wall = 4,
    Obstacle = 5,
    Movable = 6,
    RoughGround = 7,
}

pub const NUM_CLASSES: usize = 8;

impl SemanticClass {
    pub const ALL: [SemanticClass; NUM_CLASSES] = [
        SemanticClass::NoLabel,
        SemanticClass::NormalGround,
        SemanticClass::Stair,
        SemanticClass::Door,
        SemanticClass::Wall,
        SemanticClass::Obstacle,
        SemanticClass::Movable,
        SemanticClass::RoughGround,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("semantic code {code} outside 0..8")))
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::NoLabel => "no_label",
            SemanticClass::NormalGround => "normal_ground",
            SemanticClass::Stair => "stair",
            SemanticClass::Door => "door",
            SemanticClass::Wall => "wall",
            SemanticClass::Obstacle => "obstacle",
            SemanticClass::Movable => "movable",
            SemanticClass::RoughGround => "rough_ground",
        }
    }

    /// Fixed display and rendering color.
    pub fn palette(self) -> [u8; 3] {
        PALETTE[self as usize]
    }

    /// Static classes counted by the collision metric (doors and movables excluded).
    pub fn is_collidable(self) -> bool {
        matches!(
            self,
            SemanticClass::NormalGround
                | SemanticClass::Stair
                | SemanticClass::Wall
                | SemanticClass::Obstacle
                | SemanticClass::RoughGround
        )
    }
}

pub const PALETTE: [[u8; 3]; NUM_CLASSES] = [
    [0, 0, 0],
    [128, 128, 128],
    [230, 160, 40],
    [60, 120, 220],
    [200, 60, 60],
    [150, 60, 200],
    [40, 200, 200],
    [110, 80, 40],
];
