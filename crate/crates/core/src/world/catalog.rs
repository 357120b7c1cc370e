//! Object category catalog and per-room landmark lists.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::RoomType;

macro_rules! catalog {
    ($($name:ident),+ $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Category {
            $($name),+
        }

        impl Category {
            pub const ALL: &'static [Category] = &[$(Category::$name),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(Category::$name => stringify!($name)),+
                }
            }
        }
    };
}

catalog! {
    // Fixed receptacles
    CounterTop, Fridge, Cabinet, Drawer, Safe, Microwave, SinkBasin, StoveBurner,
    DiningTable, Shelf, Dresser, Bed, Sofa, SideTable, Desk, GarbageCan, Toilet,
    BathtubBasin, ArmChair, CoffeeTable,
    // Lamps
    FloorLamp, DeskLamp,
    // Pickupable
    Mug, Cup, Bowl, Plate, Pan, Apple, Lettuce, Tomato, Bread, Potato, Egg, Knife,
    Spoon, Fork, SoapBar, Cloth, Towel, Candle, TissueBox, KeyChain, CreditCard,
    CellPhone, Book, Pencil, Pillow, RemoteControl, Watch, Vase,
}

impl Category {
    pub fn count() -> usize {
        Self::ALL.len()
    }

    /// Position in [`Category::ALL`]; used as the semantic-map channel.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Lower-case single word used in instructions.
    pub fn word(self) -> String {
        self.name().to_ascii_lowercase()
    }

    /// Case-insensitive lookup by name or instruction word.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL.iter().copied().find(|c| c.name().eq_ignore_ascii_case(s))
    }

    pub fn is_pickupable(self) -> bool {
        self >= Category::Mug
    }

    /// Furniture and appliances occupy a non-walkable cell and never move.
    pub fn is_fixed(self) -> bool {
        !self.is_pickupable()
    }

    pub fn is_receptacle(self) -> bool {
        use Category::*;
        self < FloorLamp || matches!(self, Mug | Cup | Bowl | Plate | Pan)
    }

    pub fn is_openable(self) -> bool {
        use Category::*;
        matches!(self, Fridge | Cabinet | Drawer | Safe | Microwave)
    }

    pub fn is_toggleable(self) -> bool {
        use Category::*;
        matches!(self, Microwave | SinkBasin | StoveBurner | FloorLamp | DeskLamp)
    }

    pub fn is_sliceable(self) -> bool {
        use Category::*;
        matches!(self, Apple | Lettuce | Tomato | Bread | Potato)
    }

    /// Small receptacles that can be carried with their contents.
    pub fn is_vessel(self) -> bool {
        self.is_pickupable() && self.is_receptacle()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCategory(pub String);

impl fmt::Display for UnknownCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown object category {:?}", self.0)
    }
}

impl std::error::Error for UnknownCategory {}

impl FromStr for Category {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s).ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Furniture kinds a room may contain, with inclusive instance-count ranges.
pub(crate) fn furniture(room: RoomType) -> &'static [(Category, usize, usize)] {
    use Category::*;
    match room {
        RoomType::Kitchen => &[
            (CounterTop, 1, 3),
            (Fridge, 1, 1),
            (Cabinet, 2, 4),
            (Drawer, 1, 3),
            (Microwave, 1, 1),
            (SinkBasin, 1, 1),
            (StoveBurner, 1, 2),
            (DiningTable, 0, 1),
            (GarbageCan, 0, 1),
            (Shelf, 0, 1),
        ],
        RoomType::Bathroom => &[
            (CounterTop, 1, 2),
            (Cabinet, 2, 4),
            (Drawer, 1, 3),
            (SinkBasin, 1, 1),
            (Toilet, 1, 1),
            (BathtubBasin, 0, 1),
            (GarbageCan, 0, 1),
            (Shelf, 0, 1),
        ],
        RoomType::Bedroom => &[
            (Bed, 1, 1),
            (Dresser, 1, 2),
            (Drawer, 2, 4),
            (Safe, 1, 1),
            (Desk, 1, 1),
            (SideTable, 1, 2),
            (Shelf, 0, 1),
            (GarbageCan, 0, 1),
            (ArmChair, 0, 1),
            (DeskLamp, 1, 1),
            (FloorLamp, 0, 1),
        ],
        RoomType::LivingRoom => &[
            (Sofa, 1, 1),
            (ArmChair, 0, 2),
            (CoffeeTable, 1, 1),
            (SideTable, 1, 2),
            (Shelf, 0, 2),
            (Cabinet, 1, 3),
            (Drawer, 1, 3),
            (Safe, 0, 1),
            (GarbageCan, 0, 1),
            (FloorLamp, 1, 1),
            (DiningTable, 0, 1),
        ],
    }
}

/// Pickupable categories that may appear in a room.
pub(crate) fn small_objects(room: RoomType) -> &'static [Category] {
    use Category::*;
    match room {
        RoomType::Kitchen => &[
            Mug, Cup, Bowl, Plate, Pan, Apple, Lettuce, Tomato, Bread, Potato, Egg, Knife, Spoon, Fork,
        ],
        RoomType::Bathroom => &[SoapBar, Cloth, Towel, Candle, TissueBox, Cup],
        RoomType::Bedroom => &[
            KeyChain, CreditCard, CellPhone, Book, Pencil, Pillow, Watch, Bowl, Vase, Cloth,
        ],
        RoomType::LivingRoom => &[
            RemoteControl,
            KeyChain,
            CreditCard,
            Book,
            Vase,
            Watch,
            Pillow,
            Bowl,
            Plate,
            CellPhone,
            Candle,
            TissueBox,
        ],
    }
}

/// Every category that may appear in the room type, in catalog order. This is
/// the completer's whitelist of admissible landmarks.
pub fn possible_landmarks(room: RoomType) -> Vec<Category> {
    let mut v: Vec<Category> = furniture(room)
        .iter()
        .map(|&(c, _, _)| c)
        .chain(small_objects(room).iter().copied())
        .collect();
    v.sort();
    v.dedup();
    v
}
