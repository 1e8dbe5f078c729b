//! Shared vocabulary: sampled windows of a random measure and certification verdicts.

use serde::Serialize;
use std::cmp::Ordering;

/// A point mass `mult * δ_(x, y)`.
///
/// Multigraphex samples carry integer multiplicities; samples from a general
/// Kallenberg representation may carry any positive real weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub x: f64,
    pub y: f64,
    pub mult: f64,
}

impl Atom {
    pub fn new(x: f64, y: f64, mult: f64) -> Self {
        debug_assert!(x >= 0.0 && y >= 0.0 && mult > 0.0, "bad atom ({x}, {y}, {mult})");
        Self { x, y, mult }
    }

    pub fn swapped(&self) -> Self {
        Self {
            x: self.y,
            y: self.x,
            mult: self.mult,
        }
    }

    fn cmp_position(&self, other: &Self) -> Ordering {
        self.x.total_cmp(&other.x).then(self.y.total_cmp(&other.y))
    }
}

/// Sorts atoms by position and sums the multiplicities of atoms that share
/// a position.
pub fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(Atom::cmp_position);
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if last.x == a.x && last.y == a.y => last.mult += a.mult,
            _ => out.push(a),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `δ_t ⊗ λ`: mass spread along the row `x = t`.
    Row,
    /// `λ ⊗ δ_t`: mass spread along the column `y = t`.
    Column,
}

/// A line component restricted to the window; `mass` is its total on the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineMass {
    pub coordinate: f64,
    pub orientation: Orientation,
    pub mass: f64,
}

/// Mass contributed by each part of the representation, before atoms are merged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PartMasses {
    /// Edge atoms between distinct latent vertices.
    pub edge: f64,
    /// Edge atoms of a vertex with itself (on the diagonal).
    pub loops: f64,
    /// Star atoms at `(vertex, mark)`.
    pub star: f64,
    /// Star atoms at `(mark, vertex)`.
    pub star_mirror: f64,
    /// Dust atoms at `(ρ, ρ')`.
    pub dust: f64,
    /// Dust atoms at `(ρ', ρ)`.
    pub dust_mirror: f64,
    pub lines: f64,
}

/// Restriction of a sampled measure to the window `[0, s]^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjacencyMeasureWindow {
    pub window: f64,
    pub atoms: Vec<Atom>,
    pub diag_mass: f64,
    pub plane_mass: f64,
    pub line_masses: Vec<LineMass>,
    pub parts: PartMasses,
}

/// Half-open interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t < self.hi
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }
}

impl AdjacencyMeasureWindow {
    pub fn empty(window: f64) -> Self {
        Self {
            window,
            atoms: Vec::new(),
            diag_mass: 0.0,
            plane_mass: 0.0,
            line_masses: Vec::new(),
            parts: PartMasses::default(),
        }
    }

    pub fn atom_mass(&self) -> f64 {
        crate::sum::compensated_sum(self.atoms.iter().map(|a| a.mult))
    }

    pub fn line_mass(&self) -> f64 {
        crate::sum::compensated_sum(self.line_masses.iter().map(|l| l.mass))
    }

    /// Mass of `A x B`, with `A` and `B` half-open intervals clipped to the window.
    pub fn mass_in(&self, a: Interval, b: Interval) -> f64 {
        let w = Interval::new(0.0, self.window);
        let (a, b) = (a.intersect(&w), b.intersect(&w));
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|at| a.contains(at.x) && b.contains(at.y))
            .map(|at| at.mult)
            .sum();
        let s = self.window;
        let lines: f64 = self
            .line_masses
            .iter()
            .map(|l| match l.orientation {
                Orientation::Row if a.contains(l.coordinate) => l.mass * b.len() / s,
                Orientation::Column if b.contains(l.coordinate) => l.mass * a.len() / s,
                _ => 0.0,
            })
            .sum();
        let diag = self.diag_mass * a.intersect(&b).len() / s;
        let plane = self.plane_mass * a.len() * b.len() / (s * s);
        atoms + lines + diag + plane
    }

    /// Restriction to the smaller window `[0, s']^2`.
    pub fn restrict(&self, s_new: f64) -> Self {
        assert!(s_new <= self.window);
        let keep = Interval::new(0.0, s_new);
        let ratio = s_new / self.window;
        Self {
            window: s_new,
            atoms: self
                .atoms
                .iter()
                .filter(|a| a.x <= s_new && a.y <= s_new)
                .copied()
                .collect(),
            diag_mass: self.diag_mass * ratio,
            plane_mass: self.plane_mass * ratio * ratio,
            line_masses: self
                .line_masses
                .iter()
                .filter(|l| keep.contains(l.coordinate) || l.coordinate == s_new)
                .map(|l| LineMass {
                    mass: l.mass * ratio,
                    ..*l
                })
                .collect(),
            parts: PartMasses::default(),
        }
    }

    /// Whether the atom multiset equals its image under `(x, y) -> (y, x)`.
    pub fn is_symmetric(&self) -> bool {
        let mirrored = merge_atoms(self.atoms.iter().map(Atom::swapped).collect());
        let original = merge_atoms(self.atoms.clone());
        mirrored == original
    }
}

/// Total mass: atoms, diagonal, planar and line components.
pub fn window_mass(w: &AdjacencyMeasureWindow) -> f64 {
    w.atom_mass() + w.diag_mass + w.plane_mass + w.line_mass()
}

/// Outcome of a local-finiteness certification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    LocallyFinite,
    NotLocallyFinite,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionStatus {
    Holds,
    Violated,
    Inconclusive,
    /// Not evaluated because a prerequisite condition failed.
    Skipped,
}

/// Superlevel measure `λ{φ > cutoff}` recorded as evidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffMeasure {
    pub cutoff: f64,
    pub measure: f64,
    pub error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRecord {
    /// `(i)`..`(vi)` for representations, `(a)`..`(c)` and `(S)`, `(I)` for multigraphexes.
    pub id: String,
    pub description: String,
    pub estimate: f64,
    pub error: f64,
    pub status: ConditionStatus,
    /// Why the condition fails (or could not be decided).
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cutoffs: Vec<CutoffMeasure>,
}

impl ConditionRecord {
    pub fn new(id: &str, description: &str) -> Self {
        Self {
            id: id.to_string(),
            description: description.to_string(),
            estimate: f64::NAN,
            error: f64::NAN,
            status: ConditionStatus::Inconclusive,
            witness: None,
            cutoffs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub evidence: Vec<ConditionRecord>,
}

impl Verdict {
    /// Combines per-condition records: any violation is decisive, otherwise
    /// every condition must hold.
    pub fn from_evidence(evidence: Vec<ConditionRecord>) -> Self {
        let violated = evidence.iter().any(|r| r.status == ConditionStatus::Violated && r.witness.is_some());
        let all_hold = evidence.iter().all(|r| r.status == ConditionStatus::Holds);
        let status = if violated {
            Status::NotLocallyFinite
        } else if all_hold {
            Status::LocallyFinite
        } else {
            Status::Inconclusive
        };
        Self { status, evidence }
    }

    pub fn condition(&self, id: &str) -> Option<&ConditionRecord> {
        self.evidence.iter().find(|r| r.id == id)
    }

    pub fn violated(&self) -> impl Iterator<Item = &ConditionRecord> {
        self.evidence.iter().filter(|r| r.status == ConditionStatus::Violated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn merge_examples() {
        assert!(merge_atoms(vec![]).is_empty());
        assert_eq!(
            merge_atoms(vec![Atom::new(1.0, 2.0, 1.0), Atom::new(1.0, 2.0, 2.0)]),
            vec![Atom::new(1.0, 2.0, 3.0)]
        );
        let distinct = vec![Atom::new(1.0, 2.0, 1.0), Atom::new(2.0, 1.0, 1.0)];
        assert_eq!(merge_atoms(distinct.clone()), distinct);
    }

    #[test]
    fn window_mass_examples() {
        assert_eq!(window_mass(&AdjacencyMeasureWindow::empty(1.0)), 0.0);
        let mut w = AdjacencyMeasureWindow::empty(1.0);
        w.diag_mass = 2f64.sqrt();
        w.plane_mass = 1.0;
        assert!((window_mass(&w) - 2.414_213_562_373_095).abs() < 1e-12);
        let mut w = AdjacencyMeasureWindow::empty(1.0);
        w.atoms = vec![Atom::new(0.1, 0.2, 3.0), Atom::new(0.3, 0.4, 2.0)];
        assert_eq!(window_mass(&w), 5.0);
    }

    #[test]
    fn mass_in_rectangles() {
        let mut w = AdjacencyMeasureWindow::empty(2.0);
        w.atoms = vec![Atom::new(0.5, 1.5, 1.0), Atom::new(1.5, 0.5, 1.0), Atom::new(1.0, 1.0, 2.0)];
        w.diag_mass = 2.0 * 2f64.sqrt();
        w.plane_mass = 4.0;
        w.line_masses = vec![LineMass {
            coordinate: 0.25,
            orientation: Orientation::Row,
            mass: 2.0,
        }];
        let (a, b) = (Interval::new(0.0, 1.0), Interval::new(1.0, 2.0));
        // one atom + row line over half its length + quarter of the plane
        assert!((w.mass_in(a, b) - (1.0 + 1.0 + 1.0)).abs() < 1e-12);
        let full = Interval::new(0.0, 2.5);
        assert!((w.mass_in(full, full) - window_mass(&w)).abs() < 1e-12);
    }

    #[test]
    fn symmetry_check() {
        let mut w = AdjacencyMeasureWindow::empty(1.0);
        assert!(w.is_symmetric());
        w.atoms = merge_atoms(vec![
            Atom::new(0.1, 0.2, 1.0),
            Atom::new(0.2, 0.1, 1.0),
            Atom::new(0.3, 0.3, 4.0),
        ]);
        assert!(w.is_symmetric());
        w.atoms.remove(0);
        assert!(!w.is_symmetric());
    }

    #[test]
    fn verdict_combination() {
        let mut ok = ConditionRecord::new("(i)", "");
        ok.status = ConditionStatus::Holds;
        assert_eq!(Verdict::from_evidence(vec![ok.clone()]).status, Status::LocallyFinite);
        let mut bad = ConditionRecord::new("(ii)", "");
        bad.status = ConditionStatus::Violated;
        bad.witness = Some("λ{g₁=∞} ≈ 1".into());
        assert_eq!(
            Verdict::from_evidence(vec![ok.clone(), bad]).status,
            Status::NotLocallyFinite
        );
        let unsure = ConditionRecord::new("(iii)", "");
        assert_eq!(Verdict::from_evidence(vec![ok, unsure]).status, Status::Inconclusive);
    }

    fn atoms() -> impl Strategy<Value = Vec<Atom>> {
        proptest::collection::vec(
            (0u8..5, 0u8..5, 1u32..4).prop_map(|(x, y, m)| Atom::new(x as f64, y as f64, m as f64)),
            0..30,
        )
    }

    proptest! {
        #[test]
        fn merge_preserves_mass_and_dedups(a in atoms()) {
            let total: f64 = a.iter().map(|t| t.mult).sum();
            let merged = merge_atoms(a);
            prop_assert_eq!(merged.iter().map(|t| t.mult).sum::<f64>(), total);
            for pair in merged.windows(2) {
                prop_assert!(pair[0].cmp_position(&pair[1]) == Ordering::Less);
            }
        }

        #[test]
        fn mass_is_additive(a in atoms(), b in atoms()) {
            let mut wa = AdjacencyMeasureWindow::empty(5.0);
            wa.atoms = merge_atoms(a.clone());
            let mut wb = AdjacencyMeasureWindow::empty(5.0);
            wb.atoms = merge_atoms(b.clone());
            let mut wab = AdjacencyMeasureWindow::empty(5.0);
            wab.atoms = merge_atoms([a, b].concat());
            prop_assert_eq!(window_mass(&wab), window_mass(&wa) + window_mass(&wb));
        }
    }
}
