//! Embedded vocabulary tables.

use serde::{Deserialize, Serialize};

/// Object nouns in contrast pairs: each noun's first contrast is its partner.
pub const OBJECT_PAIRS: &[(&str, &str)] = &[
    ("man", "woman"),
    ("boy", "girl"),
    ("dog", "cat"),
    ("horse", "cow"),
    ("sheep", "goat"),
    ("bird", "bat"),
    ("car", "truck"),
    ("bus", "van"),
    ("bicycle", "motorcycle"),
    ("segway", "scooter"),
    ("boat", "ship"),
    ("chair", "sofa"),
    ("table", "desk"),
    ("lamp", "candle"),
    ("cup", "bowl"),
    ("plate", "tray"),
    ("knife", "fork"),
    ("bottle", "jar"),
    ("apple", "pear"),
    ("book", "magazine"),
    ("laptop", "tablet"),
    ("phone", "camera"),
    ("shirt", "jacket"),
    ("hat", "helmet"),
    ("bag", "basket"),
    ("tree", "bush"),
    ("kite", "balloon"),
    ("clock", "mirror"),
    ("pillow", "blanket"),
    ("ball", "frisbee"),
];

/// Concrete nouns that never occur as scene objects; easy negatives.
pub const EASY_NOUNS: &[&str] = &[
    "mountain", "river", "cloud", "bridge", "tower", "fence", "road", "window", "door", "flag",
    "statue", "fountain", "tent", "rock", "barrel", "ladder", "bench", "sign", "pole", "wall",
];

pub const NEGATIVE_DETERMINERS: &[&str] = &["no"];
pub const NEGATION: &str = "not";
pub const WITH: &str = "with";
pub const WITHOUT: &str = "without";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttrClass {
    Spatial,
    Color,
    Number,
    Size,
}

impl AttrClass {
    pub const ALL: [AttrClass; 4] = [AttrClass::Spatial, AttrClass::Color, AttrClass::Number, AttrClass::Size];

    pub fn words(self) -> &'static [&'static str] {
        match self {
            AttrClass::Spatial => &["left", "middle", "right"],
            AttrClass::Color => &[
                "red", "blue", "green", "yellow", "black", "white", "brown", "gray", "pink", "purple",
                "silver", "golden", "beige", "navy", "violet", "tan", "maroon", "teal", "cyan", "olive",
            ],
            AttrClass::Number => &["single", "double", "triple", "multiple"],
            AttrClass::Size => &[
                "small", "large", "tiny", "huge", "tall", "short", "long", "wide", "narrow", "thin",
            ],
        }
    }

    /// Class of an attribute word.
    pub fn of(word: &str) -> Option<AttrClass> {
        Self::ALL.into_iter().find(|c| c.words().contains(&word))
    }

    /// Same-class words other than `word`.
    pub fn contrasts(word: &str) -> impl Iterator<Item = &'static str> + '_ {
        Self::of(word)
            .map(|c| c.words())
            .unwrap_or(&[])
            .iter()
            .copied()
            .filter(move |w| *w != word)
    }
}

/// Object groups decide which accessories an object may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    Person,
    Animal,
    Vehicle,
    Furniture,
    Item,
}

impl Group {
    pub fn accessories(self) -> &'static [&'static str] {
        match self {
            Group::Person => &["dark hair", "red shirt", "a hat", "glasses", "a backpack", "a scarf"],
            Group::Animal => &["a collar", "a leash", "spots", "stripes", "a saddle", "long fur"],
            Group::Vehicle => &["a rack", "a flag", "a trailer", "open doors", "a sticker", "lights"],
            Group::Furniture => &["a cushion", "a cover", "a drawer", "wheels", "a fringe", "a handle"],
            Group::Item => &["a lid", "a strap", "a label", "a handle", "a pattern", "a ribbon"],
        }
    }
}

pub fn group_of(noun: &str) -> Option<Group> {
    const PERSON: &[&str] = &["man", "woman", "boy", "girl"];
    const ANIMAL: &[&str] = &["dog", "cat", "horse", "cow", "sheep", "goat", "bird", "bat"];
    const VEHICLE: &[&str] = &[
        "car", "truck", "bus", "van", "bicycle", "motorcycle", "segway", "scooter", "boat", "ship",
    ];
    const FURNITURE: &[&str] = &["chair", "sofa", "table", "desk", "lamp", "candle", "pillow", "blanket", "clock", "mirror"];
    if PERSON.contains(&noun) {
        Some(Group::Person)
    } else if ANIMAL.contains(&noun) {
        Some(Group::Animal)
    } else if VEHICLE.contains(&noun) {
        Some(Group::Vehicle)
    } else if FURNITURE.contains(&noun) {
        Some(Group::Furniture)
    } else if is_object_noun(noun) {
        Some(Group::Item)
    } else {
        None
    }
}

/// Spatial relations between two objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialKind {
    Above,
    Below,
    Beside,
}

impl SpatialKind {
    pub const ALL: [SpatialKind; 3] = [SpatialKind::Above, SpatialKind::Below, SpatialKind::Beside];

    pub fn word(self) -> &'static str {
        match self {
            SpatialKind::Above => "above",
            SpatialKind::Below => "below",
            SpatialKind::Beside => "beside",
        }
    }

    pub fn parse(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.word() == word)
    }
}

pub fn object_nouns() -> impl Iterator<Item = &'static str> {
    OBJECT_PAIRS.iter().flat_map(|&(a, b)| [a, b])
}

pub fn is_object_noun(word: &str) -> bool {
    object_nouns().any(|n| n == word)
}

pub fn is_noun(word: &str) -> bool {
    is_object_noun(word) || EASY_NOUNS.contains(&word)
}

/// Contrast nouns for an object noun (its pair partner).
pub fn contrast_nouns(noun: &str) -> impl Iterator<Item = &'static str> + '_ {
    OBJECT_PAIRS.iter().filter_map(move |&(a, b)| {
        if a == noun {
            Some(b)
        } else if b == noun {
            Some(a)
        } else {
            None
        }
    })
}

/// Every word the generator can emit.
pub fn all_words() -> alloc::vec::Vec<&'static str> {
    let mut out: alloc::vec::Vec<&'static str> = alloc::vec::Vec::new();
    out.extend(object_nouns());
    out.extend(EASY_NOUNS);
    for c in AttrClass::ALL {
        out.extend(c.words());
    }
    for g in [Group::Person, Group::Animal, Group::Vehicle, Group::Furniture, Group::Item] {
        for a in g.accessories() {
            out.extend(a.split(' '));
        }
    }
    out.extend(SpatialKind::ALL.map(SpatialKind::word));
    out.extend(NEGATIVE_DETERMINERS);
    out.extend([NEGATION, WITH, WITHOUT]);
    let mut seen = alloc::collections::BTreeSet::new();
    out.retain(|w| seen.insert(*w));
    out
}
