use serde::Serialize;

use super::{Route, TankState};

/// Links of one forced-circulation cycle, run one after another,
/// downstream first so no tank is asked to take water it has no room for.
const CYCLE: [&[Route]; 3] = [&[Route::S4ToS5], &[Route::S3ToS4], &[Route::S2ToS3, Route::S1ToS2]];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CirculationStatus {
    Idle,
    Running { link: usize, elapsed: f64 },
}

/// Level-controlled sequencer for the periodic whole-loop circulation.
///
/// Each link runs until its destination reaches the fill target, its
/// source falls to the floor, or the per-link time budget elapses.
#[derive(Clone, Debug)]
pub struct CirculationScheduler {
    pub link_budget: f64,
    pub fill_fraction: f64,
    pub floor_fraction: f64,
    status: CirculationStatus,
    queued: u32,
    completed: u64,
}

impl Default for CirculationScheduler {
    fn default() -> Self {
        Self {
            link_budget: 600.0,
            fill_fraction: 0.9,
            floor_fraction: 0.1,
            status: CirculationStatus::Idle,
            queued: 0,
            completed: 0,
        }
    }
}

impl CirculationScheduler {
    pub fn request_cycle(&mut self) {
        self.queued = self.queued.saturating_add(1);
    }

    pub fn status(&self) -> CirculationStatus {
        self.status
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    fn target(&self, route: Route, dst: &TankState) -> f64 {
        // S5 is a float-switched tank: fill completely.
        let f = if route == Route::S4ToS5 { 1.0 } else { self.fill_fraction };
        f * dst.capacity
    }

    /// Starts a queued cycle if idle. Returns true when a cycle started.
    pub(crate) fn begin_step(&mut self) -> bool {
        if self.status == CirculationStatus::Idle && self.queued > 0 {
            self.queued -= 1;
            self.status = CirculationStatus::Running { link: 0, elapsed: 0.0 };
            return true;
        }
        false
    }

    pub fn active_routes(&self) -> &'static [Route] {
        match self.status {
            CirculationStatus::Idle => &[],
            CirculationStatus::Running { link, .. } => CYCLE[link],
        }
    }

    /// Litres the scheduler allows on `route` this step, if it drives it.
    pub(crate) fn limit(&self, route: Route, tanks: &[TankState; 5]) -> Option<f64> {
        if !self.active_routes().contains(&route) {
            return None;
        }
        let dst = &tanks[route.dst().index()];
        Some((self.target(route, dst) - dst.volume).max(0.0))
    }

    /// Advances the current link after transfers. Returns true when a cycle finished.
    pub(crate) fn end_step(&mut self, tanks: &[TankState; 5], dt: f64) -> bool {
        let CirculationStatus::Running { link, elapsed } = self.status else {
            return false;
        };
        let elapsed = elapsed + dt;
        let lead = CYCLE[link][0];
        let src = &tanks[lead.src().index()];
        let dst = &tanks[lead.dst().index()];
        let done = dst.volume >= self.target(lead, dst) - 1e-9
            || src.volume <= self.floor_fraction * src.capacity
            || elapsed >= self.link_budget;
        if !done {
            self.status = CirculationStatus::Running { link, elapsed };
            return false;
        }
        if link + 1 < CYCLE.len() {
            self.status = CirculationStatus::Running { link: link + 1, elapsed: 0.0 };
            false
        } else {
            self.status = CirculationStatus::Idle;
            self.completed += 1;
            true
        }
    }
}
