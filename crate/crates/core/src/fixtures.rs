//! Reference libraries shipped with the crate.
//!
//! `fig6` is a two-goal library where `p` expands to `a < b < c` and `q` to
//! `a < d`. `station` is the space-station library with goals
//! `increase-power`, `raise-O2-level` and `raise-temp`, whose adoption of the
//! first two is tied deterministically to the context variables `EVA-prep`
//! and `O2-drop`.

use crate::library::PlanLibrary;

pub const FIG6_JSON: &str = include_str!("../fixtures/fig6.json");
pub const STATION_JSON: &str = include_str!("../fixtures/station.json");

pub fn fig6() -> PlanLibrary {
    PlanLibrary::from_json(FIG6_JSON).expect("fig6 fixture is valid")
}

pub fn station() -> PlanLibrary {
    PlanLibrary::from_json(STATION_JSON).expect("station fixture is valid")
}
