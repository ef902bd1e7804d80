//! The committed example programs and the verdicts they must produce.

use std::path::PathBuf;

use shapeck::engine::Outcome::{self, *};

pub struct Case {
    pub name: &'static str,
    /// valid-deref, valid-free, valid-memtrack.
    pub expect: [Outcome; 3],
    /// Index of the property a seeded bug violates.
    pub bug: Option<usize>,
    /// Builds unbounded lists, so it only converges with abstraction.
    pub unbounded: bool,
}

const fn case(name: &'static str, expect: [Outcome; 3], bug: Option<usize>, unbounded: bool) -> Case {
    Case {
        name,
        expect,
        bug,
        unbounded,
    }
}

pub const CASES: [Case; 17] = [
    case("arrays", [Error, Error, Error], None, false),
    case("branch_alloc_free", [True, True, True], None, false),
    case("builder_called_twice", [True, True, True], None, true),
    case("dll_build_backward_free", [True, True, True], None, true),
    case("dll_use_after_free", [False, True, True], Some(0), false),
    case("int_loop_bound_5", [True, True, True], None, false),
    case("int_loop_bound_6", [Unknown, True, True], Some(0), false),
    case("leak_in_helper", [True, True, False], Some(2), false),
    case("nll_build_free", [True, True, True], None, true),
    case("null_deref", [False, True, True], Some(0), false),
    case("sll_bounded_three", [True, True, True], None, false),
    case("sll_build_traverse_free", [True, True, True], None, true),
    case("sll_double_free", [True, False, True], Some(1), false),
    case("sll_drop_last_pointer", [True, True, False], Some(2), true),
    case("sll_reverse", [True, True, True], None, true),
    case("sll_use_after_free", [False, True, True], Some(0), true),
    case("tsll_as_dll", [True, True, True], None, false),
];

pub fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(format!("{name}.mpl"))
}

pub fn source(name: &str) -> String {
    std::fs::read_to_string(path(name)).unwrap()
}
