//! The catalogue of basic patterns and their description-complexity code.
//!
//! A pattern is an uninstantiated shape: every cell carries a colour *slot*,
//! and an instantiation assigns distinct colours to the slots. The default
//! catalogue holds four shape classes (plain, diagonal, triangle, line).
//!
//! Description complexity of an instantiated pattern is the length of the
//! code `(colours, shape, configuration)` with each field rounded up to whole
//! bits. Plain patterns carry neither a shape nor a configuration field.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{ColorId, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Plain,
    Diagonal,
    Triangle,
    Line,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 4] = [
        ShapeClass::Plain,
        ShapeClass::Diagonal,
        ShapeClass::Triangle,
        ShapeClass::Line,
    ];

    /// Dense index `0..4`, used for tables and spectral series.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Plain => "plain",
            ShapeClass::Diagonal => "diagonal",
            ShapeClass::Triangle => "triangle",
            ShapeClass::Line => "line",
        }
    }

    /// Number of configurations this class has on an `n x n` grid.
    pub fn config_count(self, n: usize) -> usize {
        match self {
            ShapeClass::Plain => 1,
            ShapeClass::Diagonal => 2,
            ShapeClass::Triangle => 4,
            ShapeClass::Line => 2 * n,
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A shape whose cells are labelled with colour slots `0..q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractPattern {
    pub shape: ShapeClass,
    pub config: usize,
    pub label: String,
    pub q: usize,
    n: usize,
    slot_mask: Vec<u8>,
}

impl AbstractPattern {
    pub fn new(
        shape: ShapeClass,
        config: usize,
        label: impl Into<String>,
        n: usize,
        q: usize,
        slot_mask: Vec<u8>,
    ) -> Result<Self> {
        if slot_mask.len() != n * n {
            return Err(invalid(format!(
                "slot mask has {} cells, expected {}",
                slot_mask.len(),
                n * n
            )));
        }
        if q == 0 {
            return Err(invalid("pattern needs at least one colour slot"));
        }
        let mut seen = vec![false; q];
        for &s in &slot_mask {
            let s = s as usize;
            if s >= q {
                return Err(invalid(format!("slot {s} not below q={q}")));
            }
            seen[s] = true;
        }
        if let Some(missing) = seen.iter().position(|&x| !x) {
            return Err(invalid(format!("slot {missing} never used in mask")));
        }
        Ok(AbstractPattern {
            shape,
            config,
            label: label.into(),
            q,
            n,
            slot_mask,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slot_mask(&self) -> &[u8] {
        &self.slot_mask
    }

    /// The slot covering the most cells (lowest slot on ties).
    pub fn background_slot(&self) -> usize {
        let mut counts = vec![0usize; self.q];
        for &s in &self.slot_mask {
            counts[s as usize] += 1;
        }
        let mut best = 0;
        for (slot, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = slot;
            }
        }
        best
    }

    fn check_colors(&self, colors: &[ColorId], k: usize) -> Result<()> {
        if colors.len() != self.q {
            return Err(invalid(format!(
                "pattern {} needs {} colours, got {}",
                self.label,
                self.q,
                colors.len()
            )));
        }
        for (i, c) in colors.iter().enumerate() {
            if c.index() >= k {
                return Err(invalid(format!("colour {} not below K={k}", c.0)));
            }
            if colors[..i].contains(c) {
                return Err(invalid(format!("colour {} assigned to two slots", c.0)));
            }
        }
        Ok(())
    }

    /// Materializes the pattern with `colors[slot]` painted on each slot.
    pub fn render(&self, colors: &[ColorId], k: usize) -> Result<Grid> {
        self.check_colors(colors, k)?;
        let cells = self
            .slot_mask
            .iter()
            .map(|&s| colors[s as usize])
            .collect();
        Grid::new(self.n, k, cells)
    }

    /// Minimum number of mismatching cells between `grid` and any injective
    /// colour instantiation of this pattern, together with the lexicographically
    /// smallest minimizing instantiation.
    pub fn distance(&self, grid: &Grid) -> Result<(usize, Vec<ColorId>)> {
        if grid.n() != self.n {
            return Err(invalid(format!(
                "pattern {} is {}x{}, grid is {}x{}",
                self.label,
                self.n,
                self.n,
                grid.n(),
                grid.n()
            )));
        }
        let k = grid.k();
        if k < self.q {
            return Err(invalid(format!(
                "pattern {} needs {} colours but K={k}",
                self.label, self.q
            )));
        }
        // matches[slot][color]: cells of the slot already showing the colour
        let mut matches = vec![vec![0usize; k]; self.q];
        let mut sizes = vec![0usize; self.q];
        for (&slot, &c) in self.slot_mask.iter().zip(grid.cells()) {
            matches[slot as usize][c.index()] += 1;
            sizes[slot as usize] += 1;
        }
        let mut search = InstantiationSearch {
            matches: &matches,
            sizes: &sizes,
            used: vec![false; k],
            current: Vec::with_capacity(self.q),
            best: None,
        };
        search.descend(0);
        let (d, colors) = search.best.expect("K >= q guarantees one instantiation");
        Ok((d, colors))
    }
}

struct InstantiationSearch<'a> {
    matches: &'a [Vec<usize>],
    sizes: &'a [usize],
    used: Vec<bool>,
    current: Vec<ColorId>,
    best: Option<(usize, Vec<ColorId>)>,
}

impl InstantiationSearch<'_> {
    // Visits assignments in lexicographic order; only a strictly better
    // distance replaces the incumbent, so ties keep the smallest tuple.
    fn descend(&mut self, mismatches: usize) {
        let slot = self.current.len();
        if let Some((best, _)) = &self.best {
            if mismatches >= *best {
                return;
            }
        }
        if slot == self.sizes.len() {
            self.best = Some((mismatches, self.current.clone()));
            return;
        }
        for color in 0..self.used.len() {
            if self.used[color] {
                continue;
            }
            self.used[color] = true;
            self.current.push(ColorId(color as u8));
            self.descend(mismatches + self.sizes[slot] - self.matches[slot][color]);
            self.current.pop();
            self.used[color] = false;
        }
    }
}

/// `ceil(log2(x))`, with `x <= 1` costing nothing.
pub fn ceil_log2(x: u128) -> u32 {
    if x <= 1 {
        0
    } else {
        128 - (x - 1).leading_zeros()
    }
}

/// Code length in bits of a basic state: colour tuple, shape field and
/// configuration field, each rounded up to whole bits.
///
/// `shape_count` is the number of non-plain shape classes that the shape
/// field discriminates; plain patterns skip both shape and configuration.
pub fn describe_complexity(
    shape: ShapeClass,
    q: usize,
    k: usize,
    shape_count: usize,
    config_count: usize,
) -> Result<u32> {
    if k < q {
        return Err(invalid(format!("pattern needs {q} colours but K={k}")));
    }
    let mut arrangements: u128 = 1;
    for i in 0..q {
        arrangements = arrangements
            .checked_mul((k - i) as u128)
            .ok_or_else(|| invalid("colour arrangement count overflows"))?;
    }
    let colour_bits = ceil_log2(arrangements);
    if shape == ShapeClass::Plain {
        return Ok(colour_bits);
    }
    Ok(colour_bits + ceil_log2(shape_count as u128) + ceil_log2(config_count as u128))
}

/// Stable identifier of a concrete basic state: catalogue index plus colours.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasicStateId {
    pub pattern: usize,
    pub colors: Vec<ColorId>,
}

/// A pattern instantiated with concrete colours.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicState {
    pub pattern: usize,
    pub shape: ShapeClass,
    pub config: usize,
    pub colors: Vec<ColorId>,
    pub background: ColorId,
    pub state: Grid,
    pub c_d: u32,
}

impl BasicState {
    pub fn id(&self) -> BasicStateId {
        BasicStateId {
            pattern: self.pattern,
            colors: self.colors.clone(),
        }
    }
}

/// The immutable set of basic patterns shared by all agents of a world.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalogue {
    n: usize,
    patterns: Vec<AbstractPattern>,
    config_counts: BTreeMap<ShapeClass, usize>,
    shape_count: usize,
}

impl Catalogue {
    pub fn from_patterns(n: usize, patterns: Vec<AbstractPattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(invalid("catalogue is empty"));
        }
        let mut config_counts = BTreeMap::new();
        let mut seen = std::collections::BTreeSet::new();
        for p in &patterns {
            if p.n != n {
                return Err(invalid(format!("pattern {} is not {n}x{n}", p.label)));
            }
            if !seen.insert((p.shape, p.config)) {
                return Err(invalid(format!(
                    "duplicate configuration {} for shape {}",
                    p.config, p.shape
                )));
            }
            *config_counts.entry(p.shape).or_insert(0) += 1;
        }
        let shape_count = config_counts
            .keys()
            .filter(|s| **s != ShapeClass::Plain)
            .count();
        Ok(Catalogue {
            n,
            patterns,
            config_counts,
            shape_count,
        })
    }

    /// The default geometric catalogue restricted to `shapes`.
    pub fn standard(n: usize, shapes: &[ShapeClass]) -> Result<Self> {
        let patterns = enumerate_patterns(n, shapes)?;
        Catalogue::from_patterns(n, patterns)
    }

    /// Plain, diagonal, triangle and line patterns.
    pub fn default_for(n: usize) -> Result<Self> {
        Catalogue::standard(n, &ShapeClass::ALL)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[AbstractPattern] {
        &self.patterns
    }

    pub fn get(&self, idx: usize) -> &AbstractPattern {
        &self.patterns[idx]
    }

    /// Number of non-plain shape classes present.
    pub fn shape_count(&self) -> usize {
        self.shape_count
    }

    pub fn config_count(&self, shape: ShapeClass) -> usize {
        self.config_counts.get(&shape).copied().unwrap_or(0)
    }

    pub fn describe_complexity(&self, idx: usize, k: usize) -> Result<u32> {
        let p = &self.patterns[idx];
        describe_complexity(
            p.shape,
            p.q,
            k,
            self.shape_count,
            self.config_count(p.shape),
        )
    }

    pub fn instantiate(&self, idx: usize, colors: &[ColorId], k: usize) -> Result<BasicState> {
        let p = &self.patterns[idx];
        let state = p.render(colors, k)?;
        Ok(BasicState {
            pattern: idx,
            shape: p.shape,
            config: p.config,
            colors: colors.to_vec(),
            background: colors[p.background_slot()],
            state,
            c_d: self.describe_complexity(idx, k)?,
        })
    }

    pub fn resolve(&self, id: &BasicStateId, k: usize) -> Result<BasicState> {
        if id.pattern >= self.patterns.len() {
            return Err(invalid(format!("no pattern with index {}", id.pattern)));
        }
        self.instantiate(id.pattern, &id.colors, k)
    }

    /// Distance from `grid` to pattern `idx`, and the basic state it selects.
    pub fn nearest_instance(&self, grid: &Grid, idx: usize) -> Result<(usize, BasicState)> {
        let (d, colors) = self.patterns[idx].distance(grid)?;
        Ok((d, self.instantiate(idx, &colors, grid.k())?))
    }

    /// The basic state `grid` is exactly equal to, if any.
    pub fn exact_match(&self, grid: &Grid) -> Result<Option<BasicState>> {
        for idx in 0..self.patterns.len() {
            let (d, colors) = self.patterns[idx].distance(grid)?;
            if d == 0 {
                return Ok(Some(self.instantiate(idx, &colors, grid.k())?));
            }
        }
        Ok(None)
    }

    /// Every concrete instantiation of every pattern for `k` colours.
    pub fn all_basic_states(&self, k: usize) -> Result<Vec<BasicState>> {
        let mut out = Vec::new();
        for idx in 0..self.patterns.len() {
            for colors in injective_tuples(self.patterns[idx].q, k) {
                out.push(self.instantiate(idx, &colors, k)?);
            }
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        let file = CatalogueFile {
            n: self.n,
            pattern: self
                .patterns
                .iter()
                .map(|p| PatternEntry {
                    shape: p.shape,
                    config: p.config,
                    label: p.label.clone(),
                    q: p.q,
                    mask: mask_text(p),
                })
                .collect(),
        };
        toml::to_string(&file).expect("catalogue serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: CatalogueFile = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        let mut patterns = Vec::with_capacity(file.pattern.len());
        for entry in file.pattern {
            let mask = Grid::parse(&entry.mask, 36)?;
            if mask.n() != file.n {
                return Err(invalid(format!(
                    "mask of {} is {}x{}, catalogue is {}x{}",
                    entry.label,
                    mask.n(),
                    mask.n(),
                    file.n,
                    file.n
                )));
            }
            let slots = mask.cells().iter().map(|c| c.0).collect();
            patterns.push(AbstractPattern::new(
                entry.shape,
                entry.config,
                entry.label,
                file.n,
                entry.q,
                slots,
            )?);
        }
        Catalogue::from_patterns(file.n, patterns)
    }
}

#[derive(Serialize, Deserialize)]
struct CatalogueFile {
    n: usize,
    pattern: Vec<PatternEntry>,
}

#[derive(Serialize, Deserialize)]
struct PatternEntry {
    shape: ShapeClass,
    config: usize,
    label: String,
    q: usize,
    mask: String,
}

fn mask_text(p: &AbstractPattern) -> String {
    let mut s = String::new();
    for row in p.slot_mask.chunks(p.n) {
        for &slot in row {
            s.push(char::from_digit(slot as u32, 36).unwrap_or('?'));
        }
        s.push('\n');
    }
    s
}

/// All injective `q`-tuples over `0..k`, in lexicographic order.
pub fn injective_tuples(q: usize, k: usize) -> Vec<Vec<ColorId>> {
    fn go(q: usize, k: usize, cur: &mut Vec<ColorId>, out: &mut Vec<Vec<ColorId>>) {
        if cur.len() == q {
            out.push(cur.clone());
            return;
        }
        for c in 0..k {
            let c = ColorId(c as u8);
            if !cur.contains(&c) {
                cur.push(c);
                go(q, k, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    if q <= k {
        go(q, k, &mut Vec::with_capacity(q), &mut out);
    }
    out
}

/// Every `(shape, configuration)` pair of the geometric shape set for an
/// `n x n` grid. Two-slot patterns put the background on slot 0 and the
/// figure on slot 1.
///
/// Configuration order: diagonals main then anti; triangles strictly above
/// the main diagonal, strictly below it, strictly above the anti-diagonal,
/// strictly below it; lines `v1..vn` (columns) then `h1..hn` (rows).
pub fn enumerate_patterns(n: usize, shapes: &[ShapeClass]) -> Result<Vec<AbstractPattern>> {
    if n < 2 {
        return Err(invalid("grid side must be at least 2"));
    }
    if shapes.is_empty() {
        return Err(invalid("shape set is empty"));
    }
    let mut shapes = shapes.to_vec();
    shapes.sort();
    shapes.dedup();

    let figure = |label: String, shape, config, f: &dyn Fn(usize, usize) -> bool| {
        let mask = (0..n * n)
            .map(|i| u8::from(f(i / n, i % n)))
            .collect();
        AbstractPattern::new(shape, config, label, n, 2, mask)
    };

    let mut out = Vec::new();
    for shape in shapes {
        match shape {
            ShapeClass::Plain => {
                out.push(AbstractPattern::new(shape, 0, "plain", n, 1, vec![0; n * n])?);
            }
            ShapeClass::Diagonal => {
                out.push(figure("diag-main".into(), shape, 0, &|r, c| r == c)?);
                out.push(figure("diag-anti".into(), shape, 1, &|r, c| r + c == n - 1)?);
            }
            ShapeClass::Triangle => {
                out.push(figure("tri-upper-right".into(), shape, 0, &|r, c| c > r)?);
                out.push(figure("tri-lower-left".into(), shape, 1, &|r, c| c < r)?);
                out.push(figure("tri-upper-left".into(), shape, 2, &|r, c| r + c < n - 1)?);
                out.push(figure("tri-lower-right".into(), shape, 3, &|r, c| r + c > n - 1)?);
            }
            ShapeClass::Line => {
                for j in 0..n {
                    out.push(figure(format!("v{}", j + 1), shape, j, &|_, c| c == j)?);
                }
                for j in 0..n {
                    out.push(figure(format!("h{}", j + 1), shape, n + j, &|r, _| r == j)?);
                }
            }
        }
    }
    Ok(out)
}
