//! Belief-propagation MPM detection on a finite instance.
//!
//! Flooding schedule: every chip-to-user message is recomputed from the
//! current user-to-chip messages, then every user-to-chip message. Messages
//! are stored as fields; [`MessageSet`] exposes them as magnetisations.

use crate::channel::ChannelInstance;
use crate::ensembles::SignatureMatrix;
use crate::error::{Error, Result};
use crate::math::LogSumExp;

pub const DEFAULT_DEGREE_CAP: usize = 20;

/// Bipartite chip/user graph with per-edge gains and the received signal.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    chips: usize,
    users: usize,
    /// Edges are grouped by chip: chip `a` owns `chip_start[a]..chip_start[a+1]`.
    chip_start: Vec<usize>,
    edge_user: Vec<usize>,
    edge_gain: Vec<f64>,
    user_start: Vec<usize>,
    /// Edge ids grouped by user.
    user_edges: Vec<usize>,
    received: Vec<f64>,
    sigma_sq: f64,
    beta: f64,
}

impl FactorGraph {
    pub fn new(s: &SignatureMatrix, received: &[f64], sigma_sq: f64, beta: f64) -> Result<Self> {
        Self::with_degree_cap(s, received, sigma_sq, beta, DEFAULT_DEGREE_CAP)
    }

    /// Nishimori-matched graph (`beta = 1`, `sigma^2 = sigma0^2`).
    pub fn nishimori(s: &SignatureMatrix, inst: &ChannelInstance) -> Result<Self> {
        Self::new(s, &inst.received, inst.sigma0_sq, 1.0)
    }

    pub fn with_degree_cap(
        s: &SignatureMatrix,
        received: &[f64],
        sigma_sq: f64,
        beta: f64,
        degree_cap: usize,
    ) -> Result<Self> {
        if received.len() != s.chips {
            return Err(Error::Dimension {
                what: "received values",
                expected: s.chips,
                got: received.len(),
            });
        }
        if !(sigma_sq > 0.0) {
            return Err(Error::NonPositiveVariance(sigma_sq));
        }
        let chip_deg = s.chip_degrees();
        if let Some(&degree) = chip_deg.iter().max() {
            if degree > degree_cap.min(crate::kernel::MAX_KERNEL_DEGREE) {
                return Err(Error::ChipDegreeCap { degree, cap: degree_cap });
            }
        }
        let mut chip_start = vec![0; s.chips + 1];
        for (a, d) in chip_deg.iter().enumerate() {
            chip_start[a + 1] = chip_start[a] + d;
        }
        // entries are sorted by chip, so edge id = entry index
        let edge_user: Vec<usize> = s.entries.iter().map(|e| e.user).collect();
        let edge_gain: Vec<f64> = s.entries.iter().map(|e| e.gain).collect();
        let user_deg = s.user_degrees();
        let mut user_start = vec![0; s.users + 1];
        for (i, d) in user_deg.iter().enumerate() {
            user_start[i + 1] = user_start[i] + d;
        }
        let mut fill = user_start.clone();
        let mut user_edges = vec![0; edge_user.len()];
        for (e, &u) in edge_user.iter().enumerate() {
            user_edges[fill[u]] = e;
            fill[u] += 1;
        }
        Ok(FactorGraph {
            chips: s.chips,
            users: s.users,
            chip_start,
            edge_user,
            edge_gain,
            user_start,
            user_edges,
            received: received.to_vec(),
            sigma_sq,
            beta,
        })
    }

    pub fn chips(&self) -> usize {
        self.chips
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn edges(&self) -> usize {
        self.edge_user.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// `beta / (2 sigma^2)`.
    pub fn coupling(&self) -> f64 {
        self.beta / (2.0 * self.sigma_sq)
    }

    pub fn received(&self) -> &[f64] {
        &self.received
    }

    pub fn chip_edges(&self, chip: usize) -> std::ops::Range<usize> {
        self.chip_start[chip]..self.chip_start[chip + 1]
    }

    pub fn user_edge_ids(&self, user: usize) -> &[usize] {
        &self.user_edges[self.user_start[user]..self.user_start[user + 1]]
    }

    pub fn edge_user(&self, edge: usize) -> usize {
        self.edge_user[edge]
    }

    pub fn edge_gain(&self, edge: usize) -> f64 {
        self.edge_gain[edge]
    }

    /// Residual `y_a - sum_k s_ak tau_k` for every chip.
    pub fn residuals(&self, tau: &[i8]) -> Vec<f64> {
        (0..self.chips)
            .map(|a| {
                self.received[a]
                    - self
                        .chip_edges(a)
                        .map(|e| self.edge_gain[e] * f64::from(tau[self.edge_user[e]]))
                        .sum::<f64>()
            })
            .collect()
    }

    /// `H(tau) = sum_a (y_a - sum_k s_ak tau_k)^2 / (2 sigma^2)`.
    pub fn energy(&self, tau: &[i8]) -> f64 {
        self.residuals(tau).iter().map(|r| r * r).sum::<f64>() / (2.0 * self.sigma_sq)
    }
}

/// Edge messages. Index = edge id.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    /// User-to-chip fields `atanh x_{i->a}`.
    pub user_to_chip: Vec<f64>,
    /// Chip-to-user fields `atanh xhat_{a->i}`.
    pub chip_to_user: Vec<f64>,
}

impl MessageSet {
    pub fn uniform(edges: usize) -> Self {
        MessageSet {
            user_to_chip: vec![0.0; edges],
            chip_to_user: vec![0.0; edges],
        }
    }

    pub fn user_to_chip_magnetization(&self, edge: usize) -> f64 {
        self.user_to_chip[edge].tanh()
    }

    pub fn chip_to_user_magnetization(&self, edge: usize) -> f64 {
        self.chip_to_user[edge].tanh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    pub max_sweeps: usize,
    /// Convergence when the largest magnetisation change of any message is below this.
    pub tol: f64,
    /// Weight of the previous message in `[0, 1)`.
    pub damping: f64,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions {
            max_sweeps: 500,
            tol: 1e-10,
            damping: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    pub magnetizations: Vec<f64>,
    /// `sign(m)`, 0 for an exact tie.
    pub estimates: Vec<i8>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Chip update for one edge from magnetisation-domain inputs.
///
/// `gains[0]` is the target edge; `gains[1..]` pair with `incoming`.
pub fn bp_update_chip(y: f64, gains: &[f64], incoming: &[f64], sigma_sq: f64, beta: f64) -> f64 {
    crate::kernel::chip_magnetization(y, beta / (2.0 * sigma_sq), gains[0], &gains[1..], incoming)
}

/// User update for one edge from magnetisation-domain inputs.
pub fn bp_update_user(incoming: &[f64]) -> f64 {
    crate::kernel::user_magnetization(incoming)
}

/// Iterative decoder state, exposed for trajectory-level tests.
#[derive(Debug, Clone)]
pub struct BpDecoder<'g> {
    graph: &'g FactorGraph,
    messages: MessageSet,
    damping: f64,
    log_w: Vec<f64>,
}

impl<'g> BpDecoder<'g> {
    pub fn new(graph: &'g FactorGraph, damping: f64) -> Self {
        assert!((0.0..1.0).contains(&damping), "damping must lie in [0, 1)");
        BpDecoder {
            graph,
            messages: MessageSet::uniform(graph.edges()),
            damping,
            log_w: Vec::new(),
        }
    }

    pub fn messages(&self) -> &MessageSet {
        &self.messages
    }

    /// One flooding sweep; returns the largest change of any message magnetisation.
    pub fn sweep(&mut self) -> f64 {
        let g = self.graph;
        let k = g.coupling();
        let mut delta: f64 = 0.0;
        for a in 0..g.chips {
            let edges = g.chip_edges(a);
            let base = edges.start;
            let d = edges.len();
            let configs = 1usize << d;
            self.log_w.clear();
            self.log_w.resize(configs, 0.0);
            let mut s: f64 = edges.clone().map(|e| g.edge_gain[e]).sum();
            let mut t: f64 = edges.clone().map(|e| self.messages.user_to_chip[e]).sum();
            let mut state = 0usize;
            for step in 0..configs {
                if step > 0 {
                    let j = step.trailing_zeros() as usize;
                    state ^= 1 << j;
                    let sign = if state & (1 << j) != 0 { -2.0 } else { 2.0 };
                    s += sign * g.edge_gain[base + j];
                    t += sign * self.messages.user_to_chip[base + j];
                }
                let r = g.received[a] - s;
                self.log_w[state] = -k * r * r + t;
            }
            for j in 0..d {
                let e = base + j;
                let mut plus = LogSumExp::new();
                let mut minus = LogSumExp::new();
                for (mask, &lw) in self.log_w.iter().enumerate() {
                    if mask & (1 << j) == 0 {
                        plus.add(lw);
                    } else {
                        minus.add(lw);
                    }
                }
                let h = self.messages.user_to_chip[e];
                let fresh = 0.5 * (plus.value() - minus.value()) - h;
                let old = self.messages.chip_to_user[e];
                let new = self.damping * old + (1.0 - self.damping) * fresh;
                debug_assert!(new.tanh().abs() <= 1.0);
                delta = delta.max((new.tanh() - old.tanh()).abs());
                self.messages.chip_to_user[e] = new;
            }
        }
        for i in 0..g.users {
            let ids = g.user_edge_ids(i);
            for &e in ids {
                let fresh: f64 = ids
                    .iter()
                    .filter(|&&c| c != e)
                    .map(|&c| self.messages.chip_to_user[c])
                    .sum();
                let old = self.messages.user_to_chip[e];
                let new = self.damping * old + (1.0 - self.damping) * fresh;
                delta = delta.max((new.tanh() - old.tanh()).abs());
                self.messages.user_to_chip[e] = new;
            }
        }
        delta
    }

    /// Full posterior fields `sum_{c in di} u_{c->i}`.
    pub fn marginal_fields(&self) -> Vec<f64> {
        (0..self.graph.users)
            .map(|i| {
                self.graph
                    .user_edge_ids(i)
                    .iter()
                    .map(|&e| self.messages.chip_to_user[e])
                    .sum()
            })
            .collect()
    }
}

/// Runs BP to convergence or `max_sweeps`; returns the last iterate either way.
pub fn bp_decode(graph: &FactorGraph, opts: &BpOptions) -> BpResult {
    let mut dec = BpDecoder::new(graph, opts.damping);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        let delta = dec.sweep();
        sweeps += 1;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    let fields = dec.marginal_fields();
    let magnetizations: Vec<f64> = fields.iter().map(|h| h.tanh()).collect();
    let estimates = fields
        .iter()
        .map(|&h| {
            if h > 0.0 {
                1
            } else if h < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect();
    BpResult {
        magnetizations,
        estimates,
        converged,
        sweeps,
    }
}
