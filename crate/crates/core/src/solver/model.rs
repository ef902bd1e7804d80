use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Map, Value};

use crate::formula::{Field, Var};

/// Location id; `NIL` is the null location and is never allocated.
pub type Loc = u32;
pub const NIL: Loc = 0;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    /// Neither allocated nor freed.
    Dangling,
    Freed,
    /// Allocated cell; fields sorted by name.
    Cell(Vec<(Field, Loc)>),
}

/// A concrete stack and heap. Locations are `0..=size`, with `0` the nil location.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HeapModel {
    /// `slots[l - 1]` describes location `l`.
    pub slots: Vec<Slot>,
    pub stack: BTreeMap<Var, Loc>,
    /// Integer variables; `None` is the unconstrained marker.
    pub ints: BTreeMap<Var, Option<i64>>,
}

impl HeapModel {
    pub fn new(size: usize) -> HeapModel {
        HeapModel {
            slots: vec![Slot::Dangling; size],
            stack: BTreeMap::new(),
            ints: BTreeMap::new(),
        }
    }

    /// Number of non-nil locations.
    pub fn size(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, l: Loc) -> &Slot {
        if l == NIL {
            &Slot::Dangling
        } else {
            &self.slots[l as usize - 1]
        }
    }

    pub fn set(&mut self, l: Loc, slot: Slot) {
        assert_ne!(l, NIL, "nil is never allocated");
        self.slots[l as usize - 1] = slot;
    }

    pub fn cell(&self, l: Loc) -> Option<&[(Field, Loc)]> {
        match self.slot(l) {
            Slot::Cell(f) => Some(f),
            _ => None,
        }
    }

    /// Allocated and freed locations.
    pub fn owned(&self) -> impl Iterator<Item = Loc> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !matches!(s, Slot::Dangling))
            .map(|(i, _)| i as Loc + 1)
    }

    /// The JSON witness shape printed by the `solve` subcommand.
    pub fn to_json(&self) -> Value {
        let stack: Map<String, Value> = self
            .stack
            .iter()
            .map(|(v, l)| (v.to_string(), json!(l)))
            .collect();
        let ints: Map<String, Value> = self
            .ints
            .iter()
            .map(|(v, i)| (v.to_string(), json!(i)))
            .collect();
        let mut heap = Map::new();
        let mut freed = Vec::new();
        for (i, s) in self.slots.iter().enumerate() {
            let l = i + 1;
            match s {
                Slot::Dangling => {}
                Slot::Freed => freed.push(json!(l)),
                Slot::Cell(fields) => {
                    let f: Map<String, Value> =
                        fields.iter().map(|(n, v)| (n.to_string(), json!(v))).collect();
                    heap.insert(l.to_string(), Value::Object(f));
                }
            }
        }
        json!({
            "locations": self.size(),
            "stack": stack,
            "ints": ints,
            "heap": heap,
            "freed": freed,
        })
    }
}

impl fmt::Display for HeapModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}
