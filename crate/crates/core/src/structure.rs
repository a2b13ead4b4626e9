//! Parental structure: which series' contemporaneous values predict which.
//!
//! Two regimes share one representation. In the *ordered* (triangular) regime
//! a fixed series order restricts parents of a series to series that come
//! later in the order, so the simultaneous-coefficient matrix Γ is strictly
//! triangular and det(I−Γ) = 1 exactly. In the *simultaneous* regime any
//! series may parent any other (cycles allowed); each parent occupies a slot
//! carrying its adaptation phase (core / warm-up / cool-down) so parental
//! sets can be revised online without disturbing the rest of the state.
//!
//! [`GammaMatrix`] holds a realized coefficient matrix Γ. Whenever the parent
//! digraph is acyclic — which covers every ordered structure and any
//! simultaneous structure without feedback loops — det(I−Γ) = 1 *exactly*
//! and linear systems in (I−Γ) solve by back-substitution along a topological
//! order; the general case falls back to dense LU.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{CoreError, Result};
use crate::linalg::Lu;

/// Adaptation phase of one simultaneous-parent slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotPhase {
    /// Established parent.
    Core,
    /// Candidate under evaluation; `tenure` counts steps since entry.
    WarmUp { tenure: usize },
    /// Exiting parent whose coefficient is being decayed; `age` counts steps
    /// since demotion.
    CoolDown { age: usize },
}

/// One parent of one series: the parent's index and its adaptation phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParentSlot {
    pub series: usize,
    pub phase: SlotPhase,
}

impl ParentSlot {
    pub fn core(series: usize) -> Self {
        ParentSlot { series, phase: SlotPhase::Core }
    }
}

/// Parental structure over `q` series.
#[derive(Debug, Clone)]
pub enum ParentalStructure {
    /// Triangular regime: `order[k]` is the series at position k; parents of
    /// a series must occupy later positions.
    Ordered { order: Vec<usize>, parents: Vec<Vec<usize>> },
    /// Free regime: per-series parent slots, cycles allowed.
    Simultaneous { slots: Vec<Vec<ParentSlot>> },
}

impl ParentalStructure {
    /// Ordered structure under the given series order; validates on build.
    pub fn ordered(order: Vec<usize>, parents: Vec<Vec<usize>>) -> Result<Self> {
        let s = ParentalStructure::Ordered { order, parents };
        s.validate()?;
        Ok(s)
    }

    /// Ordered structure under the identity order 0, 1, …, q−1.
    pub fn identity_ordered(parents: Vec<Vec<usize>>) -> Result<Self> {
        let order = (0..parents.len()).collect();
        ParentalStructure::ordered(order, parents)
    }

    /// Simultaneous structure with all slots in core phase.
    pub fn simultaneous(parents: Vec<Vec<usize>>) -> Result<Self> {
        let slots = parents
            .into_iter()
            .map(|ps| ps.into_iter().map(ParentSlot::core).collect())
            .collect();
        let s = ParentalStructure::Simultaneous { slots };
        s.validate()?;
        Ok(s)
    }

    pub fn n_series(&self) -> usize {
        match self {
            ParentalStructure::Ordered { parents, .. } => parents.len(),
            ParentalStructure::Simultaneous { slots } => slots.len(),
        }
    }

    /// Parent series of `j`, in slot order.
    pub fn parent_series(&self, j: usize) -> Vec<usize> {
        match self {
            ParentalStructure::Ordered { parents, .. } => parents[j].clone(),
            ParentalStructure::Simultaneous { slots } => {
                slots[j].iter().map(|s| s.series).collect()
            }
        }
    }

    /// Slots of series `j` (ordered structures expose core-phase slots).
    pub fn slots(&self, j: usize) -> Vec<ParentSlot> {
        match self {
            ParentalStructure::Ordered { parents, .. } => {
                parents[j].iter().map(|&h| ParentSlot::core(h)).collect()
            }
            ParentalStructure::Simultaneous { slots } => slots[j].clone(),
        }
    }

    /// Series in the sequence forecasting must simulate them: reverse of the
    /// configured order, so the series with no parents comes first and every
    /// series follows all of its possible parents.
    pub fn simulation_order(&self) -> Result<Vec<usize>> {
        match self {
            ParentalStructure::Ordered { order, .. } => {
                Ok(order.iter().rev().copied().collect())
            }
            ParentalStructure::Simultaneous { .. } => Err(CoreError::config(
                "simultaneous structures have no series-by-series simulation order; outcomes are drawn jointly",
            )),
        }
    }

    /// Check all structural invariants; errors name the offending edge.
    pub fn validate(&self) -> Result<()> {
        let q = self.n_series();
        match self {
            ParentalStructure::Ordered { order, parents } => {
                if order.len() != q {
                    return Err(CoreError::config(format!(
                        "series order lists {} entries for {q} series",
                        order.len()
                    )));
                }
                let mut position = vec![usize::MAX; q];
                for (k, &j) in order.iter().enumerate() {
                    if j >= q {
                        return Err(CoreError::config(format!(
                            "series order contains out-of-range index {j} (q = {q})"
                        )));
                    }
                    if position[j] != usize::MAX {
                        return Err(CoreError::config(format!(
                            "series order repeats index {j}"
                        )));
                    }
                    position[j] = k;
                }
                for (j, ps) in parents.iter().enumerate() {
                    let mut seen = vec![false; q];
                    for &h in ps {
                        check_edge(j, h, q, &mut seen)?;
                        if position[h] <= position[j] {
                            return Err(CoreError::config(format!(
                                "edge {j} → {h}: parent {h} does not come after series {j} in the series order"
                            )));
                        }
                    }
                }
            }
            ParentalStructure::Simultaneous { slots } => {
                for (j, ss) in slots.iter().enumerate() {
                    let mut seen = vec![false; q];
                    for slot in ss {
                        check_edge(j, slot.series, q, &mut seen)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_edge(j: usize, h: usize, q: usize, seen: &mut [bool]) -> Result<()> {
    if h >= q {
        return Err(CoreError::config(format!(
            "edge {j} → {h}: parent index {h} is out of range (q = {q})"
        )));
    }
    if h == j {
        return Err(CoreError::config(format!(
            "edge {j} → {j}: a series cannot be its own parent"
        )));
    }
    if seen[h] {
        return Err(CoreError::config(format!(
            "edge {j} → {h} is listed twice"
        )));
    }
    seen[h] = true;
    Ok(())
}

/// A realized simultaneous-coefficient matrix Γ: row j holds the coefficients
/// of series j's parents, diagonal structurally zero.
#[derive(Debug, Clone)]
pub struct GammaMatrix {
    q: usize,
    rows: Vec<Vec<(usize, f64)>>,
    /// Topological order of the parent digraph when it is acyclic: every
    /// series appears after all of its parents.
    topo: Option<Vec<usize>>,
}

impl GammaMatrix {
    /// Build from explicit sparse rows; validates indices and detects
    /// acyclicity once (the pattern, not the values, decides it).
    pub fn from_rows(q: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != q {
            return Err(CoreError::config(format!(
                "coefficient matrix has {} rows for q = {q}",
                rows.len()
            )));
        }
        for (j, row) in rows.iter().enumerate() {
            let mut seen = vec![false; q];
            for &(h, _) in row {
                check_edge(j, h, q, &mut seen)?;
            }
        }
        let topo = topological_order(q, &rows);
        Ok(GammaMatrix { q, rows, topo })
    }

    /// Build from a structure and a coefficient lookup `coeff(j, h)`.
    pub fn from_structure<F: Fn(usize, usize) -> f64>(
        structure: &ParentalStructure,
        coeff: F,
    ) -> Self {
        let q = structure.n_series();
        let rows: Vec<Vec<(usize, f64)>> = (0..q)
            .map(|j| structure.parent_series(j).into_iter().map(|h| (h, coeff(j, h))).collect())
            .collect();
        // The structure was validated at construction, so indices are sound.
        let topo = topological_order(q, &rows);
        GammaMatrix { q, rows, topo }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Whether the parent digraph has no cycles (guarantees det(I−Γ) = 1).
    pub fn is_acyclic(&self) -> bool {
        self.topo.is_some()
    }

    /// Dense Γ.
    pub fn dense(&self) -> Array2<f64> {
        let mut g = Array2::zeros((self.q, self.q));
        for (j, row) in self.rows.iter().enumerate() {
            for &(h, v) in row {
                g[[j, h]] = v;
            }
        }
        g
    }

    /// Dense I − Γ.
    pub fn i_minus_gamma(&self) -> Array2<f64> {
        let mut m = self.dense();
        m.mapv_inplace(|v| -v);
        for j in 0..self.q {
            m[[j, j]] += 1.0;
        }
        m
    }

    /// log |det(I − Γ)|: exactly 0 for an acyclic pattern, −∞ when singular.
    pub fn log_abs_det_i_minus_gamma(&self) -> f64 {
        if self.topo.is_some() {
            return 0.0;
        }
        Lu::factor(&self.i_minus_gamma().view()).log_abs_det()
    }

    /// Solve (I − Γ) x = rhs: exact back-substitution along the topological
    /// order when acyclic, dense LU otherwise.
    pub fn solve(&self, rhs: &ArrayView1<f64>) -> Result<Array1<f64>> {
        if rhs.len() != self.q {
            return Err(CoreError::config(format!(
                "right-hand side has length {}, expected {}",
                rhs.len(),
                self.q
            )));
        }
        if let Some(topo) = &self.topo {
            let mut x = Array1::zeros(self.q);
            for &j in topo {
                let mut v = rhs[j];
                for &(h, g) in &self.rows[j] {
                    v += g * x[h];
                }
                x[j] = v;
            }
            Ok(x)
        } else {
            let lu = Lu::factor(&self.i_minus_gamma().view());
            lu.solve(rhs).map_err(|_| {
                CoreError::singular("I − Γ has no unique solution for this coefficient draw")
            })
        }
    }

    /// Dense A = (I − Γ)⁻¹.
    pub fn inverse_i_minus_gamma(&self) -> Result<Array2<f64>> {
        if let Some(topo) = &self.topo {
            // Column k of A solves (I − Γ) x = e_k; back-substitute all
            // columns in one sweep.
            let mut a = Array2::zeros((self.q, self.q));
            for &j in topo {
                a[[j, j]] += 1.0;
                // Row j of A: e_j' + Σ_h γ_{jh}·(row h of A).
                for idx in 0..self.rows[j].len() {
                    let (h, g) = self.rows[j][idx];
                    for k in 0..self.q {
                        let add = g * a[[h, k]];
                        a[[j, k]] += add;
                    }
                }
            }
            Ok(a)
        } else {
            let lu = Lu::factor(&self.i_minus_gamma().view());
            lu.inverse()
                .map_err(|_| CoreError::singular("I − Γ cannot be inverted"))
        }
    }
}

/// Kahn's algorithm on the dependency digraph (series j depends on each
/// parent h). Returns an order where parents precede dependents, or `None`
/// when a cycle exists.
fn topological_order(q: usize, rows: &[Vec<(usize, f64)>]) -> Option<Vec<usize>> {
    let mut out_degree: Vec<usize> = rows.iter().map(|r| r.len()).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); q];
    for (j, row) in rows.iter().enumerate() {
        for &(h, _) in row {
            dependents[h].push(j);
        }
    }
    let mut ready: Vec<usize> = (0..q).filter(|&j| out_degree[j] == 0).collect();
    let mut order = Vec::with_capacity(q);
    while let Some(h) = ready.pop() {
        order.push(h);
        for &j in &dependents[h] {
            out_degree[j] -= 1;
            if out_degree[j] == 0 {
                ready.push(j);
            }
        }
    }
    if order.len() == q {
        Some(order)
    } else {
        None
    }
}
