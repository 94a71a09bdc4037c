//! Target classes and compact label sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// One of the three coarse soundscape classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Anthropophony,
    Biophony,
    Geophony,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Anthropophony, Class::Biophony, Class::Geophony];

    pub fn index(self) -> usize {
        match self {
            Class::Anthropophony => 0,
            Class::Biophony => 1,
            Class::Geophony => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Class> {
        Class::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            Class::Anthropophony => 'A',
            Class::Biophony => 'B',
            Class::Geophony => 'G',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Anthropophony => "anthropophony",
            Class::Biophony => "biophony",
            Class::Geophony => "geophony",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Class {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "anthropophony" => Ok(Class::Anthropophony),
            "b" | "biophony" => Ok(Class::Biophony),
            "g" | "geophony" => Ok(Class::Geophony),
            other => Err(Error::invalid(format!("unknown class '{other}'"))),
        }
    }
}

/// A subset of {A, B, G}. The empty set is rendered as `S` (silence).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);
    pub const ALL: LabelSet = LabelSet(0b111);

    pub fn from_bits(bits: u8) -> LabelSet {
        LabelSet(bits & 0b111)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn single(class: Class) -> LabelSet {
        LabelSet(1 << class.index())
    }

    pub fn from_flags(flags: [bool; 3]) -> LabelSet {
        let mut set = LabelSet::EMPTY;
        for (class, on) in Class::ALL.into_iter().zip(flags) {
            if on {
                set.insert(class);
            }
        }
        set
    }

    pub fn flags(self) -> [bool; 3] {
        Class::ALL.map(|c| self.contains(c))
    }

    pub fn contains(self, class: Class) -> bool {
        self.0 & (1 << class.index()) != 0
    }

    pub fn insert(&mut self, class: Class) {
        self.0 |= 1 << class.index();
    }

    pub fn remove(&mut self, class: Class) {
        self.0 &= !(1 << class.index());
    }

    pub fn with(mut self, class: Class) -> LabelSet {
        self.insert(class);
        self
    }

    pub fn without(mut self, class: Class) -> LabelSet {
        self.remove(class);
        self
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn intersects(self, other: LabelSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn iter(self) -> impl Iterator<Item = Class> {
        Class::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// All eight subsets in canonical order: S, A, B, G, AB, AG, BG, ABG.
    pub fn all_subsets() -> [LabelSet; 8] {
        [0b000, 0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111].map(LabelSet)
    }

    /// Compact code such as `"BG"`; `"S"` for the empty set.
    pub fn code(self) -> String {
        if self.is_empty() {
            return "S".to_string();
        }
        self.iter().map(Class::letter).collect()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for LabelSet {
    type Err = Error;

    /// Accepts letter codes (`"AB"`, `"a+g"`, `"S"`) in any order.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("s") || s.eq_ignore_ascii_case("silence") {
            return Ok(LabelSet::EMPTY);
        }
        let mut set = LabelSet::EMPTY;
        for ch in s.chars() {
            match ch.to_ascii_uppercase() {
                'A' => set.insert(Class::Anthropophony),
                'B' => set.insert(Class::Biophony),
                'G' => set.insert(Class::Geophony),
                '+' | '|' | ',' | ' ' => {}
                _ => return Err(Error::invalid(format!("bad label code '{s}'"))),
            }
        }
        if set.is_empty() {
            return Err(Error::invalid(format!("bad label code '{s}'")));
        }
        Ok(set)
    }
}
