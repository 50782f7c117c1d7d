//! Ground-truth execution of physical plans on a simulated cluster.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::optkernel::cost::{CostModel, OpSizes};
use crate::optkernel::logical::{InputStats, Schema};
use crate::optkernel::physical::{derive, PhysNode, PhysOp};
use crate::optkernel::{Job, OptimizedPlan};
use crate::seed;

/// Fixed scheduling overhead of one stage, seconds.
pub const STAGE_STARTUP_S: f64 = 4.0;
/// Resident memory of an idle vertex, MiB.
pub const VERTEX_BASE_MB: f64 = 128.0;
const MIB: f64 = 1024.0 * 1024.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Log-space sd of the multiplicative CPU-time factor.
    pub cpu_sigma: f64,
    /// Half-width of the uniform relative IO-time jitter.
    pub io_jitter: f64,
    /// Log-space sd of the multiplicative latency factor.
    pub latency_sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            cpu_sigma: 0.15,
            io_jitter: 0.02,
            latency_sigma: 0.35,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            cpu_sigma: 0.0,
            io_jitter: 0.0,
            latency_sigma: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub latency_s: f64,
    pub pn_hours: f64,
    pub data_read: f64,
    pub data_written: f64,
    pub total_vertices: u64,
}

/// The noise-free part of an execution.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueWork {
    pub cpu_s: f64,
    pub io_s: f64,
    pub data_read: f64,
    pub data_written: f64,
    pub total_vertices: u64,
    pub critical_path_s: f64,
    pub query_bytes_read: Vec<f64>,
    pub max_memory_mb: f64,
    pub avg_memory_mb: f64,
}

impl TrueWork {
    pub fn pn_hours(&self) -> f64 {
        (self.cpu_s + self.io_s) / 3600.0
    }

    /// Apply one draw of cluster noise.
    pub fn sample(&self, noise: &NoiseModel, seed: u64) -> RunMetrics {
        let mut rng = seed::rng(seed, &["noise"]);
        let cpu_f = if noise.cpu_sigma > 0.0 {
            LogNormal::new(0.0, noise.cpu_sigma).expect("valid sigma").sample(&mut rng)
        } else {
            1.0
        };
        let io_f = if noise.io_jitter > 0.0 {
            1.0 + rng.random_range(-noise.io_jitter..noise.io_jitter)
        } else {
            1.0
        };
        let lat_f = if noise.latency_sigma > 0.0 {
            LogNormal::new(0.0, noise.latency_sigma).expect("valid sigma").sample(&mut rng)
        } else {
            1.0
        };
        RunMetrics {
            latency_s: self.critical_path_s * lat_f,
            pn_hours: (self.cpu_s * cpu_f + self.io_s * io_f) / 3600.0,
            data_read: self.data_read,
            data_written: self.data_written,
            total_vertices: self.total_vertices,
        }
    }
}

#[derive(Default)]
struct Stage {
    dop: u32,
    cpu_s: f64,
    read: f64,
    written: f64,
    mem_bytes: f64,
}

struct Exec<'a> {
    model: CostModel,
    stats: InputStats,
    schema: &'a Schema,
    stages: Vec<(Stage, f64)>,
}

impl Exec<'_> {
    fn io_s(&self, st: &Stage) -> f64 {
        st.read * self.model.read_byte + st.written * self.model.write_byte
    }

    /// Returns true `(rows, width)` and when all upstream stages finished.
    fn run(&mut self, node: &PhysNode, stage: &mut Stage) -> (f64, f64, f64) {
        let mut sizes = Vec::with_capacity(node.children.len());
        let mut ready = 0.0f64;
        for c in &node.children {
            if node.op.is_exchange() {
                let mut st = Stage { dop: c.dop.max(1), ..Stage::default() };
                let (r, w, up) = self.run(c, &mut st);
                let finish = up + self.stage_time(&st);
                ready = ready.max(finish);
                self.stages.push((st, finish));
                sizes.push((r, w));
            } else {
                let (r, w, up) = self.run(c, stage);
                ready = ready.max(up);
                sizes.push((r, w));
            }
        }
        let (rows, width) = derive(&node.op, &sizes, &self.stats, self.schema);
        let work = self.model.work(
            &node.op,
            &OpSizes {
                children: &sizes,
                output: (rows, width),
                dop: node.dop,
            },
            self.schema,
        );
        stage.cpu_s += work.cpu_s;
        stage.read += work.read_bytes;
        stage.written += work.written_bytes;
        stage.mem_bytes += self.memory(&node.op, &sizes, (rows, width), node.dop.max(1));
        (rows, width, ready)
    }

    /// Per-vertex working memory of an operator.
    fn memory(&self, op: &PhysOp, children: &[(f64, f64)], out: (f64, f64), dop: u32) -> f64 {
        let bytes = |s: (f64, f64)| s.0 * s.1;
        let dop = f64::from(dop);
        let raw = match op {
            PhysOp::HashJoin { .. } => bytes(children[1]) / dop,
            PhysOp::BroadcastJoin { .. } => bytes(children[1]),
            PhysOp::HashAgg { .. } | PhysOp::PartialAgg { .. } => bytes(out) / dop,
            PhysOp::Sort { .. } => bytes(children[0]) / dop,
            _ => 0.0,
        };
        match self.model.hash_memory_bytes {
            Some(limit) => raw.min(limit),
            None => raw,
        }
    }

    fn stage_time(&self, st: &Stage) -> f64 {
        (st.cpu_s + self.io_s(st)) / f64::from(st.dop.max(1)) + STAGE_STARTUP_S
    }
}

/// Deterministic ground-truth work of running `plan` for `job`.
pub fn true_work(job: &Job, plan: &OptimizedPlan) -> TrueWork {
    let mut exec = Exec {
        model: CostModel::ground_truth(),
        stats: job.true_stats(),
        schema: &job.schema,
        stages: Vec::new(),
    };
    let mut critical = 0.0f64;
    let mut query_bytes_read = Vec::with_capacity(plan.roots.len());
    for root in &plan.roots {
        let before = exec.stages.len();
        let mut st = Stage { dop: root.dop.max(1), ..Stage::default() };
        let (_, _, up) = exec.run(root, &mut st);
        let finish = up + exec.stage_time(&st);
        exec.stages.push((st, finish));
        critical = critical.max(finish);
        query_bytes_read.push(exec.stages[before..].iter().map(|(s, _)| s.read).sum());
    }
    let mut w = TrueWork {
        cpu_s: 0.0,
        io_s: 0.0,
        data_read: 0.0,
        data_written: 0.0,
        total_vertices: 0,
        critical_path_s: critical,
        query_bytes_read,
        max_memory_mb: 0.0,
        avg_memory_mb: 0.0,
    };
    let mut mem_sum = 0.0;
    for (st, _) in &exec.stages {
        w.cpu_s += st.cpu_s;
        w.io_s += exec.io_s(st);
        w.data_read += st.read;
        w.data_written += st.written;
        w.total_vertices += u64::from(st.dop.max(1));
        let mb = VERTEX_BASE_MB + st.mem_bytes / MIB;
        w.max_memory_mb = w.max_memory_mb.max(mb);
        mem_sum += mb;
    }
    w.avg_memory_mb = mem_sum / exec.stages.len().max(1) as f64;
    w
}

/// One noisy run of `plan`.
pub fn execute(job: &Job, plan: &OptimizedPlan, noise: &NoiseModel, seed: u64) -> (RunMetrics, TrueWork) {
    let w = true_work(job, plan);
    (w.sample(noise, seed), w)
}
