//! The exploration loop for a ground robot and a drone, or either alone.
//!
//! Each planning step works on a frozen map: corridors, frontier
//! distribution, goal selection, RRT planning, densification and (for the
//! drone) yaw optimization. Both paths are then executed, scanning at every
//! viewpoint, and all scans are integrated before the next step.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;

use crate::corridor::{assign_frontiers, distribute_frontiers, ugv_corridor, uav_corridor, Corridor, FrontierDistribution};
use crate::error::{Error, Result};
use crate::frontier::FrontierSet;
use crate::geometry::Viewpoint;
use crate::goal::{cluster_frontiers, render_view_quality, select_uav_goal, select_ugv_goal, Exclusions};
use crate::grid::VoxelKey;
use crate::metrics::{PathRow, StepRecord};
use crate::occupancy::{ChangedVoxelSet, OccupancyMap};
use crate::optimizer::{optimize_path_yaw, path_hard_ig, visible_frontiers, SoftVisibilityParams};
use crate::planner::{plan_rrt, Path, RrtConfig, SamplingDomain};
use crate::sensor::{simulate_agent_scan, AgentSpec, GroundTruthWorld};
use crate::seed;
use crate::worlds::default_starts;

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationConfig {
    pub ugv: AgentSpec,
    pub uav: AgentSpec,
    /// Distance discount of view quality, per meter.
    pub lambda: f64,
    /// Monte-Carlo samples per ground corridor cell.
    pub n_r: usize,
    /// Stop once both agents' paths see at most this many frontiers.
    pub epsilon: usize,
    pub cluster_factor: u32,
    /// Maximum spacing of executed viewpoints, meters.
    pub spacing: f64,
    pub rrt: RrtConfig,
    pub soft: SoftVisibilityParams,
    pub optimizer_iters: usize,
    /// Goals tried per agent and step when planning fails.
    pub goal_attempts: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            ugv: AgentSpec::ugv(),
            uav: AgentSpec::uav(),
            lambda: 0.05,
            n_r: 50,
            epsilon: 1,
            cluster_factor: 8,
            spacing: 0.9,
            rrt: RrtConfig::default(),
            soft: SoftVisibilityParams::default(),
            optimizer_iters: 100,
            goal_attempts: 5,
            max_steps: 200,
            seed: 0,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        self.ugv.validate()?;
        self.uav.validate()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if self.n_r == 0 {
            return bad("n_r must be at least 1");
        }
        if self.cluster_factor < 2 || !self.cluster_factor.is_power_of_two() {
            return bad("cluster factor must be a power of two >= 2");
        }
        if !(self.spacing > 0.0) {
            return bad("densification spacing must be positive");
        }
        if !(self.rrt.goal_bias >= 0.0 && self.rrt.goal_bias <= 1.0) || !(self.rrt.step_voxels > 0.0) {
            return bad("invalid RRT parameters");
        }
        if !(self.soft.k_d > 0.0 && self.soft.k_a > 0.0) {
            return bad("soft-visibility sharpness must be positive");
        }
        if self.goal_attempts == 0 {
            return bad("goal attempts must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Team {
    Both,
    UgvOnly,
    UavOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentRole {
    Ugv,
    Uav,
}

impl AgentRole {
    pub fn name(self) -> &'static str {
        match self {
            AgentRole::Ugv => "ugv",
            AgentRole::Uav => "uav",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// No frontier is observable by the team any more, or both planned paths
    /// see at most `epsilon` frontiers.
    Complete,
    /// Frontiers are observable but no agent could get a goal and a path.
    Blocked,
    MaxSteps,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::Blocked => "blocked",
            RunStatus::MaxSteps => "max-steps",
        }
    }
}

/// One agent's plan for a step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlan {
    pub role: AgentRole,
    pub goal: Option<Viewpoint>,
    /// Densified (and for the drone yaw-optimized) path; viewpoints after the
    /// first are executed.
    pub path: Option<Path>,
    pub ig_before: usize,
    pub ig_after: usize,
    pub plan_time_s: f64,
    /// Frontiers the goal was expected to observe.
    pub expected: Vec<VoxelKey>,
}

impl AgentPlan {
    fn idle(role: AgentRole, plan_time_s: f64) -> Self {
        Self { role, goal: None, path: None, ig_before: 0, ig_after: 0, plan_time_s, expected: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub step: usize,
    /// Frontiers some active agent can observe.
    pub assigned: usize,
    pub agents: Vec<AgentPlan>,
    /// Wall time of the whole planning phase.
    pub plan_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExplorationOutcome {
    pub status: RunStatus,
    pub records: Vec<StepRecord>,
    pub paths: Vec<PathRow>,
    pub map: OccupancyMap,
    /// Number of planning steps taken.
    pub steps: usize,
}

/// Exploration state between planning steps.
#[derive(Debug, Clone)]
pub struct Explorer<'w> {
    world: &'w GroundTruthWorld,
    config: ExplorationConfig,
    team: Team,
    map: OccupancyMap,
    frontiers: FrontierSet,
    ugv_pose: Viewpoint,
    uav_pose: Viewpoint,
    /// Frontiers a goal was expected to observe but did not.
    unobservable: HashSet<VoxelKey>,
    step: usize,
    status: Option<RunStatus>,
    records: Vec<StepRecord>,
    paths: Vec<PathRow>,
}

impl<'w> Explorer<'w> {
    /// Starts at the default start poses and takes the initial scans.
    pub fn new(world: &'w GroundTruthWorld, config: ExplorationConfig, team: Team) -> Result<Self> {
        let (ugv, uav) = default_starts(world, &config.ugv, &config.uav)?;
        Self::with_starts(world, config, team, ugv, uav)
    }

    pub fn with_starts(
        world: &'w GroundTruthWorld,
        config: ExplorationConfig,
        team: Team,
        ugv_start: Viewpoint,
        uav_start: Viewpoint,
    ) -> Result<Self> {
        config.validate()?;
        let map = OccupancyMap::from_grid(world.grid().clone(), Default::default());
        let mut explorer = Self {
            world,
            config,
            team,
            map,
            frontiers: FrontierSet::new(),
            ugv_pose: ugv_start,
            uav_pose: uav_start,
            unobservable: HashSet::new(),
            step: 0,
            status: None,
            records: Vec::new(),
            paths: Vec::new(),
        };
        let mut initial = Vec::new();
        for role in explorer.roles() {
            let q = explorer.pose(role);
            initial.push((role, q));
        }
        let changed = explorer.scan_all(&initial)?;
        explorer.frontiers.update(&explorer.map, &changed);
        Ok(explorer)
    }

    pub fn roles(&self) -> Vec<AgentRole> {
        match self.team {
            Team::Both => vec![AgentRole::Ugv, AgentRole::Uav],
            Team::UgvOnly => vec![AgentRole::Ugv],
            Team::UavOnly => vec![AgentRole::Uav],
        }
    }

    pub fn agent(&self, role: AgentRole) -> &AgentSpec {
        match role {
            AgentRole::Ugv => &self.config.ugv,
            AgentRole::Uav => &self.config.uav,
        }
    }

    pub fn pose(&self, role: AgentRole) -> Viewpoint {
        match role {
            AgentRole::Ugv => self.ugv_pose,
            AgentRole::Uav => self.uav_pose,
        }
    }

    pub fn map(&self) -> &OccupancyMap {
        &self.map
    }

    pub fn frontiers(&self) -> &FrontierSet {
        &self.frontiers
    }

    pub fn config(&self) -> &ExplorationConfig {
        &self.config
    }

    pub fn status(&self) -> Option<RunStatus> {
        self.status
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Simulates and integrates scans at the given poses, in order. Each
    /// agent's own collision box is known to be free wherever it stands.
    fn scan_all(&mut self, poses: &[(AgentRole, Viewpoint)]) -> Result<ChangedVoxelSet> {
        let scans: Vec<Result<_>> = poses
            .par_iter()
            .map(|(role, q)| simulate_agent_scan(self.world, self.agent(*role), q))
            .collect();
        let mut changed = ChangedVoxelSet::default();
        for ((role, q), scan) in poses.iter().zip(scans) {
            let agent = self.agent(*role).clone();
            let origin = agent.sensor_origin(q);
            changed.extend(self.map.clear_box(&origin, &agent.half_extents));
            changed.extend(self.map.integrate_scan(&origin, &scan?)?);
        }
        Ok(changed)
    }

    fn corridor(&self, role: AgentRole) -> Result<Corridor> {
        match role {
            AgentRole::Ugv => ugv_corridor(&self.map, &self.config.ugv, &self.ugv_pose),
            AgentRole::Uav => uav_corridor(&self.map, &self.config.uav, &self.uav_pose),
        }
    }

    /// Plans one step against the current map without changing anything.
    pub fn plan(&self) -> Result<StepPlan> {
        let started = Instant::now();
        let candidates: Vec<VoxelKey> =
            self.frontiers.iter().copied().filter(|k| !self.unobservable.contains(k)).collect();
        let roles = self.roles();
        let corridors: Vec<Corridor> = roles.iter().map(|&r| self.corridor(r)).collect::<Result<_>>()?;
        let distribution = match self.team {
            Team::Both => {
                let candidate_set: FrontierSet = candidates.iter().copied().collect();
                distribute_frontiers(&candidate_set, &corridors[0], &corridors[1], &self.map)
            }
            Team::UgvOnly => FrontierDistribution { ugv: assign_frontiers(&self.map, &corridors[0], &candidates), uav: Vec::new() },
            Team::UavOnly => FrontierDistribution { ugv: Vec::new(), uav: assign_frontiers(&self.map, &corridors[0], &candidates) },
        };
        let shared = started.elapsed().as_secs_f64();
        let assigned = distribution.ugv.len() + distribution.uav.len();
        let mut agents = Vec::new();
        if assigned == 0 {
            agents.extend(roles.iter().map(|&r| AgentPlan::idle(r, shared)));
            return Ok(StepPlan { step: self.step, assigned, agents, plan_time_s: started.elapsed().as_secs_f64() });
        }
        let mut ugv_goal: Option<Viewpoint> = None;
        for (&role, corridor) in roles.iter().zip(&corridors) {
            let t = Instant::now();
            let mut plan = match role {
                AgentRole::Ugv => self.plan_ugv(corridor, &distribution.ugv_keys(), &candidates)?,
                AgentRole::Uav => self.plan_uav(corridor, &distribution.uav_keys(), &candidates, ugv_goal.as_ref())?,
            };
            plan.plan_time_s = shared + t.elapsed().as_secs_f64();
            if role == AgentRole::Ugv {
                ugv_goal = plan.goal;
            }
            agents.push(plan);
        }
        Ok(StepPlan { step: self.step, assigned, agents, plan_time_s: started.elapsed().as_secs_f64() })
    }

    /// Each retry doubles the iteration budget: long winding routes need
    /// more samples than short ones.
    fn rrt_config(&self, attempt: usize) -> RrtConfig {
        let scale = 1usize << attempt.min(16);
        RrtConfig { max_iterations: self.config.rrt.max_iterations.saturating_mul(scale), ..self.config.rrt }
    }

    fn domain(corridor: &Corridor) -> SamplingDomain {
        SamplingDomain::Cells { centers: corridor.cells.iter().map(|c| c.position).collect(), edge: corridor.cell_size }
    }

    fn plan_ugv(&self, corridor: &Corridor, assigned: &[VoxelKey], candidates: &[VoxelKey]) -> Result<AgentPlan> {
        let agent = &self.config.ugv;
        if assigned.is_empty() || corridor.is_empty() {
            return Ok(AgentPlan::idle(AgentRole::Ugv, 0.0));
        }
        let image = render_view_quality(corridor, assigned, &self.map, self.config.n_r, seed::derive(self.config.seed, &[self.step as u64, 1]))?;
        let mut excluded = HashSet::new();
        for attempt in 0..self.config.goal_attempts {
            let Some(goal) = select_ugv_goal(&image, &self.ugv_pose, self.config.lambda, &excluded) else {
                break;
            };
            let rrt_seed = seed::derive(self.config.seed, &[self.step as u64, 2, attempt as u64]);
            let domain = Self::domain(corridor);
            match plan_rrt(&self.map, agent, &self.ugv_pose, &goal.viewpoint, &domain, &self.rrt_config(attempt), rrt_seed) {
                Ok(path) => {
                    let path = path.densify(self.config.spacing);
                    let ig = path_hard_ig(&self.map, candidates, agent, &path).value;
                    let origin = agent.sensor_origin(&goal.viewpoint);
                    let expected = visible_frontiers(&self.map, assigned, &agent.sensor, &origin, goal.viewpoint.yaw);
                    return Ok(AgentPlan {
                        role: AgentRole::Ugv,
                        goal: Some(goal.viewpoint),
                        path: Some(path),
                        ig_before: ig,
                        ig_after: ig,
                        plan_time_s: 0.0,
                        expected,
                    });
                }
                Err(_) => {
                    excluded.insert(goal.key);
                }
            }
        }
        Ok(AgentPlan::idle(AgentRole::Ugv, 0.0))
    }

    fn plan_uav(
        &self,
        corridor: &Corridor,
        assigned: &[VoxelKey],
        candidates: &[VoxelKey],
        ugv_goal: Option<&Viewpoint>,
    ) -> Result<AgentPlan> {
        let agent = &self.config.uav;
        if assigned.is_empty() || corridor.is_empty() {
            return Ok(AgentPlan::idle(AgentRole::Uav, 0.0));
        }
        let clusters = cluster_frontiers(self.map.grid(), assigned, self.config.cluster_factor)?;
        let conflict_radius = self.config.cluster_factor as f64 * self.map.resolution();
        let mut exclusions = Exclusions::default();
        let mut attempt = 0;
        while attempt < self.config.goal_attempts {
            let Some(goal) = select_uav_goal(&clusters, corridor, &self.map, &self.uav_pose, self.config.lambda, &exclusions) else {
                break;
            };
            // the ground robot keeps contested goals
            if ugv_goal.is_some_and(|g| nalgebra::distance(&g.position, &goal.viewpoint.position) <= conflict_radius) {
                exclusions.clusters.insert(goal.cluster);
                continue;
            }
            let rrt_seed = seed::derive(self.config.seed, &[self.step as u64, 3, attempt as u64]);
            let rrt = self.rrt_config(attempt);
            attempt += 1;
            let domain = Self::domain(corridor);
            match plan_rrt(&self.map, agent, &self.uav_pose, &goal.viewpoint, &domain, &rrt, rrt_seed) {
                Ok(path) => {
                    let path = path.densify(self.config.spacing);
                    let opt = optimize_path_yaw(&path, &self.map, candidates, agent, &self.config.soft, self.config.optimizer_iters);
                    return Ok(AgentPlan {
                        role: AgentRole::Uav,
                        goal: Some(goal.viewpoint),
                        path: Some(opt.path),
                        ig_before: opt.before.value,
                        ig_after: opt.after.value,
                        plan_time_s: 0.0,
                        expected: vec![goal.target],
                    });
                }
                Err(_) => {
                    exclusions.cells.insert(goal.cell);
                }
            }
        }
        Ok(AgentPlan::idle(AgentRole::Uav, 0.0))
    }

    /// Executes a plan produced by [`Explorer::plan`] on the current state.
    pub fn execute(&mut self, plan: StepPlan) -> Result<Option<RunStatus>> {
        if self.status.is_some() {
            return Ok(self.status);
        }
        let moving: Vec<&AgentPlan> = plan.agents.iter().filter(|a| a.path.is_some()).collect();
        let status = if plan.assigned == 0 {
            Some(RunStatus::Complete)
        } else if moving.is_empty() {
            Some(RunStatus::Blocked)
        } else {
            let mut poses = Vec::new();
            for a in &moving {
                let path = a.path.as_ref().expect("filtered");
                for q in &path.viewpoints {
                    self.paths.push(PathRow {
                        step: plan.step,
                        agent: a.role.name().into(),
                        x: q.position.x,
                        y: q.position.y,
                        z: q.position.z,
                        yaw: q.yaw,
                    });
                }
                poses.extend(path.viewpoints.iter().skip(1).map(|q| (a.role, *q)));
            }
            let changed = self.scan_all(&poses)?;
            self.frontiers.update(&self.map, &changed);
            for a in &moving {
                let last = *a.path.as_ref().expect("filtered").viewpoints.last().expect("non-empty path");
                match a.role {
                    AgentRole::Ugv => self.ugv_pose = last,
                    AgentRole::Uav => self.uav_pose = last,
                }
                for k in &a.expected {
                    if self.frontiers.contains(k) {
                        self.unobservable.insert(*k);
                    }
                }
            }
            let eps = self.config.epsilon;
            moving.iter().all(|a| a.ig_after <= eps).then_some(RunStatus::Complete)
        };

        let cov = self.map.coverage_stats();
        for a in &plan.agents {
            let path_len = a.path.as_ref().map_or(0.0, Path::length);
            self.records.push(StepRecord {
                step: plan.step,
                agent: a.role.name().into(),
                goal_x: a.goal.map(|g| g.position.x),
                goal_y: a.goal.map(|g| g.position.y),
                goal_z: a.goal.map(|g| g.position.z),
                path_len_m: path_len,
                ig_before: a.ig_before,
                ig_after: a.ig_after,
                plan_time_s: a.plan_time_s,
                cov_free: cov.free,
                cov_occ: cov.occupied,
                cov_unknown: cov.unknown,
                frontier_count: self.frontiers.len(),
            });
        }
        self.step += 1;
        self.status = status.or((self.step >= self.config.max_steps).then_some(RunStatus::MaxSteps));
        Ok(self.status)
    }

    /// Plans and executes one step.
    pub fn step(&mut self) -> Result<Option<RunStatus>> {
        if self.status.is_some() {
            return Ok(self.status);
        }
        let plan = self.plan()?;
        self.execute(plan)
    }

    pub fn run(mut self) -> Result<ExplorationOutcome> {
        let status = loop {
            if let Some(s) = self.step()? {
                break s;
            }
        };
        Ok(self.finish(status))
    }

    fn finish(self, status: RunStatus) -> ExplorationOutcome {
        ExplorationOutcome { status, records: self.records, paths: self.paths, map: self.map, steps: self.step }
    }
}

/// Team exploration from the default start poses.
pub fn run_exploration(world: &GroundTruthWorld, config: &ExplorationConfig) -> Result<ExplorationOutcome> {
    Explorer::new(world, config.clone(), Team::Both)?.run()
}

/// One agent exploring alone from its default start pose.
pub fn single_agent_baseline(world: &GroundTruthWorld, config: &ExplorationConfig, which: AgentRole) -> Result<ExplorationOutcome> {
    let team = match which {
        AgentRole::Ugv => Team::UgvOnly,
        AgentRole::Uav => Team::UavOnly,
    };
    Explorer::new(world, config.clone(), team)?.run()
}
