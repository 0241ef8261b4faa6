//! The agents' decision rule.
//!
//! Generation complexity charges `alpha = 2 log2(n) + log2(K)` bits per cell
//! that has to change. A target's unexpectedness is its generation cost from
//! the shared reference minus its description cost; its desirability
//! additionally subtracts what it still costs to produce from the current
//! grid. Agents pursue the most desirable visible target and fall back to
//! random recolouring when nothing is desirable.

use rand::Rng;

use crate::error::Result;
use crate::grid::{hamming, ColorId, Grid};
use crate::pattern::{BasicState, Catalogue};

/// Desirability values closer than this are treated as tied.
pub const TIE_EPSILON: f64 = 1e-9;

/// Bits needed to name one changed cell and its new colour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha(pub f64);

impl Alpha {
    pub fn new(n: usize, k: usize) -> Self {
        Alpha(2.0 * (n as f64).log2() + (k as f64).log2())
    }

    pub fn for_grid(grid: &Grid) -> Self {
        Alpha::new(grid.n(), grid.k())
    }

    pub fn bits(self) -> f64 {
        self.0
    }
}

/// Cost in bits of producing `target` from `reference` cell by cell.
pub fn generation_complexity(reference: &Grid, target: &Grid, alpha: Alpha) -> Result<f64> {
    Ok(hamming(reference, target)? as f64 * alpha.0)
}

pub fn unexpectedness(reference: &Grid, target: &BasicState, alpha: Alpha) -> Result<f64> {
    Ok(generation_complexity(reference, &target.state, alpha)? - target.c_d as f64)
}

pub fn desirability(
    reference: &Grid,
    current: &Grid,
    target: &BasicState,
    alpha: Alpha,
) -> Result<f64> {
    reference.check_compatible(current)?;
    Ok(unexpectedness(reference, target, alpha)?
        - generation_complexity(current, &target.state, alpha)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesirabilityRecord {
    pub target: BasicState,
    /// Cells separating the reference from the target.
    pub h_ref: usize,
    /// Cells separating the current grid from the target.
    pub h_cur: usize,
    pub u: f64,
    pub d: f64,
}

impl DesirabilityRecord {
    pub fn is_desirable(&self) -> bool {
        self.d > 0.0
    }
}

/// Evaluates every catalogue pattern within `horizon` cells of `current`.
///
/// Each pattern is instantiated with the colours that bring it closest to the
/// current grid; the reference distance is measured against that same
/// instantiation.
pub fn candidates(
    current: &Grid,
    catalogue: &Catalogue,
    horizon: usize,
    alpha: Alpha,
    reference: &Grid,
) -> Result<Vec<DesirabilityRecord>> {
    reference.check_compatible(current)?;
    let mut out = Vec::new();
    for idx in 0..catalogue.len() {
        let (h_cur, target) = catalogue.nearest_instance(current, idx)?;
        if h_cur > horizon {
            continue;
        }
        let h_ref = hamming(reference, &target.state)?;
        let c_d = target.c_d as f64;
        let u = alpha.0 * h_ref as f64 - c_d;
        let d = u - alpha.0 * h_cur as f64;
        out.push(DesirabilityRecord {
            target,
            h_ref,
            h_cur,
            u,
            d,
        });
    }
    Ok(out)
}

/// Picks a maximally desirable record, or `None` when no record has `d > 0`.
/// Ties within [`TIE_EPSILON`] are broken uniformly at random.
pub fn select_target<'a, R: Rng + ?Sized>(
    records: &'a [DesirabilityRecord],
    rng: &mut R,
) -> Option<&'a DesirabilityRecord> {
    let best = records
        .iter()
        .map(|r| r.d)
        .fold(f64::NEG_INFINITY, f64::max);
    if best <= 0.0 {
        return None;
    }
    let tied: Vec<&DesirabilityRecord> = records
        .iter()
        .filter(|r| best - r.d <= TIE_EPSILON)
        .collect();
    match tied.len() {
        1 => Some(tied[0]),
        len => Some(tied[rng.gen_range(0..len)]),
    }
}

/// What the selected agent does with its cell this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentAction {
    SetColor(ColorId),
    None,
}

/// Moves `cell` toward `target` if it differs there. Without a target, with
/// probability `p_random`, switches to a uniformly chosen different colour.
pub fn agent_decide<R: Rng + ?Sized>(
    cell: usize,
    current: &Grid,
    target: Option<&BasicState>,
    p_random: f64,
    rng: &mut R,
) -> AgentAction {
    let here = current.get(cell);
    match target {
        Some(t) => {
            let wanted = t.state.get(cell);
            if wanted != here {
                AgentAction::SetColor(wanted)
            } else {
                AgentAction::None
            }
        }
        None => {
            if current.k() < 2 || !rng.gen_bool(p_random) {
                return AgentAction::None;
            }
            let pick = rng.gen_range(0..current.k() - 1) as u8;
            let color = if pick >= here.0 { pick + 1 } else { pick };
            AgentAction::SetColor(ColorId(color))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cat() -> Catalogue {
        Catalogue::default_for(5).unwrap()
    }

    fn black() -> Grid {
        Grid::filled(5, 2, ColorId::BLACK).unwrap()
    }

    fn diag_target(c: &Catalogue) -> BasicState {
        c.instantiate(1, &[ColorId::BLACK, ColorId::WHITE], 2).unwrap()
    }

    #[test]
    fn alpha_value() {
        let a = Alpha::new(5, 2);
        assert!((a.0 - (2.0 * 5f64.log2() + 1.0)).abs() < 1e-15);
        assert!((a.0 - 5.643856189774724).abs() < 1e-12);
    }

    #[test]
    fn generation_complexity_examples() {
        let a = Alpha::new(5, 2);
        let g = black();
        assert_eq!(generation_complexity(&g, &g, a).unwrap(), 0.0);
        let one = g.with_cell(7, ColorId::WHITE).unwrap();
        assert!((generation_complexity(&g, &one, a).unwrap() - a.0).abs() < 1e-12);
        let t = diag_target(&cat());
        let got = generation_complexity(&g, &t.state, a).unwrap();
        assert!((got - 5.0 * a.0).abs() < 1e-12);
        assert!((got - 28.219).abs() < 1e-3);
        let other = Grid::filled(4, 2, ColorId::BLACK).unwrap();
        assert!(generation_complexity(&g, &other, a).is_err());
    }

    #[test]
    fn unexpectedness_examples() {
        let c = cat();
        let a = Alpha::new(5, 2);
        let plain = c.instantiate(0, &[ColorId::BLACK], 2).unwrap();
        assert_eq!(unexpectedness(&black(), &plain, a).unwrap(), -1.0);
        let u = unexpectedness(&black(), &diag_target(&c), a).unwrap();
        assert!((u - (5.0 * a.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn desirability_worked_example() {
        let c = cat();
        let a = Alpha::new(5, 2);
        let t = diag_target(&c);
        let d0 = desirability(&black(), &black(), &t, a).unwrap();
        assert_eq!(d0, -4.0);
        let flipped = black().with_cell(0, ColorId::WHITE).unwrap();
        let d1 = desirability(&black(), &flipped, &t, a).unwrap();
        assert!((d1 - (a.0 - 4.0)).abs() < 1e-9);
        assert!(d1 > 0.0);
        let at_target = desirability(&black(), &t.state, &t, a).unwrap();
        assert_eq!(at_target, unexpectedness(&black(), &t, a).unwrap());
    }

    #[test]
    fn horizon_zero_without_match_is_empty() {
        let c = cat();
        let a = Alpha::new(5, 2);
        let g = black().with_cell(1, ColorId::WHITE).unwrap();
        assert!(candidates(&g, &c, 0, a, &black()).unwrap().is_empty());
    }

    #[test]
    fn candidates_from_black_at_horizon_seven() {
        let c = cat();
        let a = Alpha::new(5, 2);
        let recs = candidates(&black(), &c, 7, a, &black()).unwrap();
        let mut shapes: Vec<_> = recs.iter().map(|r| (r.target.shape, r.h_cur)).collect();
        shapes.sort();
        use crate::pattern::ShapeClass::*;
        let mut expected = vec![(Plain, 0), (Diagonal, 5), (Diagonal, 5)];
        expected.extend(std::iter::repeat((Line, 5)).take(10));
        assert_eq!(shapes, expected);
        for r in &recs {
            assert_eq!(r.target.background, ColorId::BLACK);
            assert!((r.d + r.target.c_d as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn full_horizon_keeps_everything() {
        let c = cat();
        let a = Alpha::new(5, 2);
        let g: Grid = "10110\n01001\n11100\n00011\n10101".parse().unwrap();
        assert_eq!(candidates(&g, &c, 25, a, &black()).unwrap().len(), 17);
    }

    #[test]
    fn fresh_reference_has_no_target() {
        let c = cat();
        let a = Alpha::new(5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let recs = candidates(&black(), &c, 25, a, &black()).unwrap();
        assert!(select_target(&recs, &mut rng).is_none());
    }

    #[test]
    fn unique_argmax_is_selected() {
        let c = cat();
        let a = Alpha::new(5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flipped = black().with_cell(0, ColorId::WHITE).unwrap();
        let recs = candidates(&flipped, &c, 7, a, &black()).unwrap();
        let t = select_target(&recs, &mut rng).unwrap();
        assert_eq!(t.target.id(), diag_target(&c).id());
        assert!((t.d - (a.0 - 4.0)).abs() < 1e-9);
        assert_eq!(recs.iter().filter(|r| r.is_desirable()).count(), 1);
    }

    #[test]
    fn zero_desirability_is_not_desirable() {
        let c = cat();
        let t = diag_target(&c);
        let rec = DesirabilityRecord { target: t, h_ref: 0, h_cur: 0, u: 0.0, d: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(select_target(std::slice::from_ref(&rec), &mut rng).is_none());
    }

    #[test]
    fn ties_split_evenly() {
        let c = cat();
        let mk = |idx, d| DesirabilityRecord {
            target: c.instantiate(idx, &[ColorId::BLACK, ColorId::WHITE], 2).unwrap(),
            h_ref: 0,
            h_cur: 0,
            u: d,
            d,
        };
        let recs = vec![mk(1, 3.0), mk(2, 3.0), mk(3, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 1000;
        let first = (0..trials)
            .filter(|_| select_target(&recs, &mut rng).unwrap().target.pattern == 1)
            .count();
        // 3 sigma for Bin(1000, 0.5) is ~47
        assert!((first as i64 - 500).abs() < 50, "first chosen {first} times");
    }

    #[test]
    fn agent_moves_toward_target() {
        let c = cat();
        let t = diag_target(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            agent_decide(6, &black(), Some(&t), 0.5, &mut rng),
            AgentAction::SetColor(ColorId::WHITE)
        );
        assert_eq!(agent_decide(1, &black(), Some(&t), 0.5, &mut rng), AgentAction::None);
    }

    #[test]
    fn goal_free_action_rate() {
        let g = black();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 10_000;
        let acted = (0..trials)
            .filter(|_| agent_decide(3, &g, None, 0.5, &mut rng) == AgentAction::SetColor(ColorId::WHITE))
            .count();
        let rate = acted as f64 / trials as f64;
        assert!((rate - 0.5).abs() < 0.03, "rate {rate}");
    }

    #[test]
    fn goal_free_picks_other_colours_uniformly() {
        let g = Grid::filled(3, 4, ColorId(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 4];
        for _ in 0..3000 {
            if let AgentAction::SetColor(c) = agent_decide(0, &g, None, 1.0, &mut rng) {
                counts[c.index()] += 1;
            }
        }
        assert_eq!(counts[2], 0);
        for c in [0, 1, 3] {
            assert!((counts[c] as i64 - 1000).abs() < 120, "{counts:?}");
        }
    }
}
