//! Fixed-tick 2D kinematic simulation of a differential-drive robot driven
//! through a doorway under a latent control delay.
//!
//! Time is discretised into 5 ms ticks. A command issued at tick `t` on a
//! line with delay `d` ms becomes effective at tick `t + ceil(d / 5)` and is
//! held until superseded. The pose sample for tick `k` is the pose at the end
//! of tick `k`, i.e. after integrating the command effective at `k`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Simulation tick length.
pub const TICK_MS: u32 = 5;
pub const MAX_LINEAR: f64 = 1.0;
pub const MAX_ANGULAR: f64 = 1.5;
pub const ARENA_SIZE_M: f64 = 10.0;
pub const ROBOT_RADIUS_M: f64 = 0.3;
pub const GOAL_RADIUS_M: f64 = 0.5;
pub const GAP_WIDTHS_M: [f64; 4] = [0.9, 1.1, 1.3, 1.5];
pub const N_STARTS: usize = 6;
pub const N_GAPS: usize = 4;
/// Wall line and goal location are shared by every environment.
pub const WALL_Y_M: f64 = 5.0;
pub const GAP_CENTER_X_M: f64 = 5.0;
pub const GOAL_XY_M: (f64, f64) = (5.0, 8.5);
const START_XY_M: [(f64, f64); N_STARTS] = [
    (2.5, 1.5),
    (5.0, 1.5),
    (7.5, 1.5),
    (2.5, 3.0),
    (5.0, 3.0),
    (7.5, 3.0),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid environment (start {start}, gap {gap})")]
    InvalidEnvironment { start: usize, gap: usize },
    #[error("command issued at tick {got} after tick {last}")]
    OutOfOrderCommand { last: u64, got: u64 },
    #[error("velocity command out of bounds (linear {linear}, angular {angular})")]
    CommandOutOfBounds { linear: f64, angular: f64 },
    #[error("time limit must be positive")]
    InvalidTimeLimit,
}

/// Number of whole ticks a delay occupies, rounding up.
pub fn delay_ticks(delay_ms: u32) -> u64 {
    u64::from(delay_ms.div_ceil(TICK_MS))
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle<T: Scalar>(theta: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut a = theta % two_pi;
    if a > pi {
        a = a - two_pi;
    } else if a <= -pi {
        a = a + two_pi;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
}

impl<T: Scalar> Pose2D<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self { x, y, theta: normalize_angle(theta) }
    }

    pub fn distance_to(&self, x: T, y: T) -> T {
        (self.x - x).hypot(self.y - y)
    }
}

/// A keyboard-style velocity command, stamped with the tick it was issued at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand<T> {
    linear: T,
    angular: T,
    issue_tick: u64,
}

impl<T: Scalar> VelocityCommand<T> {
    pub fn new(linear: T, angular: T, issue_tick: u64) -> Result<Self, SimError> {
        let lin_ok = linear.is_finite() && linear.abs() <= T::lit(MAX_LINEAR);
        let ang_ok = angular.is_finite() && angular.abs() <= T::lit(MAX_ANGULAR);
        if !(lin_ok && ang_ok) {
            return Err(SimError::CommandOutOfBounds {
                linear: linear.to_f64().unwrap_or(f64::NAN),
                angular: angular.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { linear, angular, issue_tick })
    }

    pub fn zero() -> Self {
        Self { linear: T::zero(), angular: T::zero(), issue_tick: 0 }
    }

    pub fn linear(&self) -> T {
        self.linear
    }

    pub fn angular(&self) -> T {
        self.angular
    }

    pub fn issue_tick(&self) -> u64 {
        self.issue_tick
    }

    /// Same velocities, ignoring the stamp.
    pub fn same_motion(&self, other: &Self) -> bool {
        self.linear == other.linear && self.angular == other.angular
    }
}

/// FIFO of commands waiting out the controller delay.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine<T> {
    delay_ms: u32,
    queue: VecDeque<VelocityCommand<T>>,
    held: VelocityCommand<T>,
    last_issue: Option<u64>,
}

impl<T: Scalar> DelayLine<T> {
    pub fn new(delay_ms: u32) -> Self {
        Self { delay_ms, queue: VecDeque::new(), held: VelocityCommand::zero(), last_issue: None }
    }

    pub fn delay_ms(&self) -> u32 {
        self.delay_ms
    }

    pub fn queued(&self) -> impl Iterator<Item = &VelocityCommand<T>> {
        self.queue.iter()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Queues a command. A command stamped with the same tick as the previous
    /// one supersedes it, so the queue stays strictly increasing.
    pub fn push(&mut self, cmd: VelocityCommand<T>) -> Result<(), SimError> {
        if let Some(last) = self.last_issue {
            if cmd.issue_tick < last {
                return Err(SimError::OutOfOrderCommand { last, got: cmd.issue_tick });
            }
            if cmd.issue_tick == last {
                if let Some(back) = self.queue.back_mut() {
                    if back.issue_tick == last {
                        *back = cmd;
                        return Ok(());
                    }
                }
            }
        }
        self.last_issue = Some(cmd.issue_tick);
        self.queue.push_back(cmd);
        Ok(())
    }

    /// Value-style push.
    pub fn with_command(mut self, cmd: VelocityCommand<T>) -> Result<Self, SimError> {
        self.push(cmd)?;
        Ok(self)
    }

    fn effective_at(&self, cmd: &VelocityCommand<T>) -> u64 {
        cmd.issue_tick + delay_ticks(self.delay_ms)
    }

    /// Most recent command already in effect at `now_tick`, or the held one.
    pub fn current_command(&self, now_tick: u64) -> VelocityCommand<T> {
        self.queue
            .iter()
            .take_while(|c| self.effective_at(c) <= now_tick)
            .last()
            .copied()
            .unwrap_or(self.held)
    }

    /// Like [`current_command`](Self::current_command) but drops commands
    /// that are now in effect.
    pub fn advance(&mut self, now_tick: u64) -> VelocityCommand<T> {
        while let Some(front) = self.queue.front() {
            if self.effective_at(front) > now_tick {
                break;
            }
            self.held = *front;
            self.queue.pop_front();
        }
        self.held
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallSegment<T> {
    pub a: (T, T),
    pub b: (T, T),
}

impl<T: Scalar> WallSegment<T> {
    pub fn distance_to(&self, px: T, py: T) -> T {
        let (ax, ay) = self.a;
        let (bx, by) = self.b;
        let dx = bx - ax;
        let dy = by - ay;
        let len2 = dx * dx + dy * dy;
        let t = if len2 > T::zero() {
            (((px - ax) * dx + (py - ay) * dy) / len2).max(T::zero()).min(T::one())
        } else {
            T::zero()
        };
        (px - (ax + t * dx)).hypot(py - (ay + t * dy))
    }
}

/// One of the 24 doorway environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arena<T> {
    pub start_index: usize,
    pub gap_index: usize,
    pub gap_width: T,
    pub size: T,
    pub start: Pose2D<T>,
    pub goal: Pose2D<T>,
    pub goal_radius: T,
    pub robot_radius: T,
    /// Door walls followed by the four bounds.
    pub walls: Vec<WallSegment<T>>,
}

pub fn make_environment<T: Scalar>(start_index: usize, gap_index: usize) -> Result<Arena<T>, SimError> {
    if start_index >= N_STARTS || gap_index >= N_GAPS {
        return Err(SimError::InvalidEnvironment { start: start_index, gap: gap_index });
    }
    let l = T::lit;
    let size = l(ARENA_SIZE_M);
    let gap_width = l(GAP_WIDTHS_M[gap_index]);
    let half = gap_width / l(2.0);
    let wall_y = l(WALL_Y_M);
    let cx = l(GAP_CENTER_X_M);
    let z = T::zero();
    let walls = vec![
        WallSegment { a: (z, wall_y), b: (cx - half, wall_y) },
        WallSegment { a: (cx + half, wall_y), b: (size, wall_y) },
        WallSegment { a: (z, z), b: (size, z) },
        WallSegment { a: (size, z), b: (size, size) },
        WallSegment { a: (size, size), b: (z, size) },
        WallSegment { a: (z, size), b: (z, z) },
    ];
    let (sx, sy) = START_XY_M[start_index];
    Ok(Arena {
        start_index,
        gap_index,
        gap_width,
        size,
        start: Pose2D::new(l(sx), l(sy), T::FRAC_PI_2()),
        goal: Pose2D::new(l(GOAL_XY_M.0), l(GOAL_XY_M.1), T::FRAC_PI_2()),
        goal_radius: l(GOAL_RADIUS_M),
        robot_radius: l(ROBOT_RADIUS_M),
        walls,
    })
}

/// Every valid `(start_index, gap_index)` pair in row-major order.
pub fn all_environments() -> impl Iterator<Item = (usize, usize)> {
    (0..N_STARTS).flat_map(|s| (0..N_GAPS).map(move |g| (s, g)))
}

impl<T: Scalar> Arena<T> {
    /// Distance from a point to the nearest wall or bound.
    pub fn clearance(&self, x: T, y: T) -> T {
        self.walls.iter().map(|w| w.distance_to(x, y)).fold(T::infinity(), T::min)
    }

    pub fn disc_fits(&self, x: T, y: T) -> bool {
        self.clearance(x, y) >= self.robot_radius
    }

    pub fn at_goal(&self, pose: &Pose2D<T>) -> bool {
        pose.distance_to(self.goal.x, self.goal.y) <= self.goal_radius
    }
}

/// Unicycle integration with collision cancellation: if the displaced disc
/// would overlap a wall the translation is dropped but the rotation kept.
pub fn step<T: Scalar>(pose: &Pose2D<T>, cmd: &VelocityCommand<T>, arena: &Arena<T>, dt_ms: u32) -> Pose2D<T> {
    let dt = T::from_u32(dt_ms).expect("dt") / T::lit(1000.0);
    let v = cmd.linear;
    let nx = pose.x + v * pose.theta.cos() * dt;
    let ny = pose.y + v * pose.theta.sin() * dt;
    let theta = normalize_angle(pose.theta + cmd.angular * dt);
    if (nx != pose.x || ny != pose.y) && !arena.disc_fits(nx, ny) {
        Pose2D { x: pose.x, y: pose.y, theta }
    } else {
        Pose2D { x: nx, y: ny, theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample<T> {
    pub tick: u64,
    pub pose: Pose2D<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub samples: Vec<TrajectorySample<T>>,
    pub reached_goal: bool,
    pub elapsed_ticks: u64,
}

impl<T: Scalar> Trajectory<T> {
    /// `# arena=<start>,<gap> delay_ms=<d>` followed by `tick,x,y,theta` rows.
    pub fn to_csv(&self, arena: &Arena<T>, delay_ms: u32) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# arena={},{} delay_ms={}", arena.start_index, arena.gap_index, delay_ms);
        out.push_str("tick,x,y,theta\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{},{}", s.tick, s.pose.x, s.pose.y, s.pose.theta);
        }
        out
    }
}

/// Incremental segment simulation, one tick at a time.
#[derive(Debug, Clone)]
pub struct SegmentRunner<T> {
    arena: Arena<T>,
    line: DelayLine<T>,
    pose: Pose2D<T>,
    next_tick: u64,
    limit_ticks: u64,
    reached_goal: bool,
    samples: Vec<TrajectorySample<T>>,
}

impl<T: Scalar> SegmentRunner<T> {
    pub fn new(arena: Arena<T>, delay_ms: u32, time_limit_ms: u32) -> Result<Self, SimError> {
        if time_limit_ms == 0 {
            return Err(SimError::InvalidTimeLimit);
        }
        let pose = arena.start;
        Ok(Self {
            arena,
            line: DelayLine::new(delay_ms),
            pose,
            next_tick: 0,
            limit_ticks: u64::from(time_limit_ms.div_ceil(TICK_MS)),
            reached_goal: false,
            samples: Vec::new(),
        })
    }

    pub fn arena(&self) -> &Arena<T> {
        &self.arena
    }

    pub fn pose(&self) -> Pose2D<T> {
        self.pose
    }

    /// Tick the next step will simulate; incoming commands are stamped with it.
    pub fn now(&self) -> u64 {
        self.next_tick
    }

    pub fn remaining_ms(&self) -> u64 {
        self.limit_ticks.saturating_sub(self.next_tick) * u64::from(TICK_MS)
    }

    pub fn reached_goal(&self) -> bool {
        self.reached_goal
    }

    pub fn is_finished(&self) -> bool {
        self.reached_goal || self.next_tick >= self.limit_ticks
    }

    pub fn push(&mut self, cmd: VelocityCommand<T>) -> Result<(), SimError> {
        self.line.push(cmd)
    }

    /// Simulates one tick; `None` once the segment has ended.
    pub fn tick(&mut self) -> Option<TrajectorySample<T>> {
        if self.is_finished() {
            return None;
        }
        let cmd = self.line.advance(self.next_tick);
        self.pose = step(&self.pose, &cmd, &self.arena, TICK_MS);
        let sample = TrajectorySample { tick: self.next_tick, pose: self.pose };
        self.samples.push(sample);
        self.next_tick += 1;
        if self.arena.at_goal(&self.pose) {
            self.reached_goal = true;
        }
        Some(sample)
    }

    pub fn into_trajectory(self) -> Trajectory<T> {
        Trajectory { reached_goal: self.reached_goal, elapsed_ticks: self.next_tick, samples: self.samples }
    }
}

pub fn run_trial_segment<T: Scalar>(
    arena: &Arena<T>,
    delay_ms: u32,
    commands: &[VelocityCommand<T>],
    time_limit_ms: u32,
) -> Result<Trajectory<T>, SimError> {
    let mut runner = SegmentRunner::new(arena.clone(), delay_ms, time_limit_ms)?;
    for cmd in commands {
        runner.push(*cmd)?;
    }
    while runner.tick().is_some() {}
    Ok(runner.into_trajectory())
}

/// Keyboard-style driver used by headless operators: lines up under the
/// doorway, then drives straight to the goal. Commands are generated by
/// closed-loop simulation at zero delay and only emitted on change, so they
/// replay as an open-loop stream under any delay.
pub fn autopilot_commands<T: Scalar>(arena: &Arena<T>, time_limit_ms: u32) -> Vec<VelocityCommand<T>> {
    let l = T::lit;
    let waypoints = [(l(GAP_CENTER_X_M), l(WALL_Y_M - 1.2)), (arena.goal.x, arena.goal.y)];
    let limit = u64::from(time_limit_ms.div_ceil(TICK_MS));
    let deadband = l(0.01);
    let mut pose = arena.start;
    let mut wp = 0;
    let mut out: Vec<VelocityCommand<T>> = Vec::new();
    let mut last = VelocityCommand::zero();
    for tick in 0..limit {
        if arena.at_goal(&pose) {
            break;
        }
        let (tx, ty) = waypoints[wp];
        if wp + 1 < waypoints.len() && pose.distance_to(tx, ty) < l(0.05) {
            wp += 1;
        }
        let (tx, ty) = waypoints[wp];
        let err = normalize_angle((ty - pose.y).atan2(tx - pose.x) - pose.theta);
        let angular = if err > deadband {
            l(MAX_ANGULAR)
        } else if err < -deadband {
            -l(MAX_ANGULAR)
        } else {
            T::zero()
        };
        let linear = if err.abs() < l(0.2) { l(MAX_LINEAR) } else { T::zero() };
        let cmd = VelocityCommand { linear, angular, issue_tick: tick };
        if out.is_empty() || !cmd.same_motion(&last) {
            out.push(cmd);
            last = cmd;
        }
        pose = step(&pose, &cmd, arena, TICK_MS);
    }
    out
}
