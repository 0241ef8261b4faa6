//! The run loop: one randomly chosen agent decides per step, and the shared
//! reference moves whenever the grid lands exactly on an unexpected basic
//! state.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{agent_decide, candidates, select_target, AgentAction, Alpha};
use crate::error::{invalid, Error, Result};
use crate::grid::{hamming, ColorId, Grid};
use crate::pattern::{BasicState, BasicStateId, Catalogue};

pub const DEFAULT_CATALOGUE: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    AllWhite,
    UniformRandom,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-white" => Ok(InitMode::AllWhite),
            "uniform-random" => Ok(InitMode::UniformRandom),
            other => Err(invalid(format!("unknown init mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    pub horizon: usize,
    pub p_random: f64,
    pub seed: u64,
    pub steps: u64,
    pub init: InitMode,
    /// `"default"` or the path of a catalogue file.
    pub catalogue: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 5,
            k: 2,
            horizon: 7,
            p_random: 0.5,
            seed: 0,
            steps: 100_000,
            init: InitMode::UniformRandom,
            catalogue: DEFAULT_CATALOGUE.to_string(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n must be at least 2"));
        }
        if !(2..=256).contains(&self.k) {
            return Err(invalid("K must lie in 2..=256"));
        }
        if !(0.0..=1.0).contains(&self.p_random) {
            return Err(invalid("p_random must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn load_catalogue(&self) -> Result<Catalogue> {
        let cat = if self.catalogue == DEFAULT_CATALOGUE {
            Catalogue::default_for(self.n)?
        } else {
            let text = std::fs::read_to_string(&self.catalogue)
                .map_err(|e| invalid(format!("cannot read catalogue {}: {e}", self.catalogue)))?;
            Catalogue::from_toml(&text)?
        };
        if cat.n() != self.n {
            return Err(invalid(format!("catalogue is {0}x{0}, config n={1}", cat.n(), self.n)));
        }
        if let Some(p) = cat.patterns().iter().find(|p| p.q > self.k) {
            return Err(invalid(format!("pattern {} needs more than K={} colours", p.label, self.k)));
        }
        Ok(cat)
    }
}

/// One decision (or one external act) and its consequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    pub cell: usize,
    /// New colour written to `cell`, if any.
    pub action: Option<ColorId>,
    pub target: Option<BasicStateId>,
    pub d_max: Option<f64>,
    pub desirable_count: usize,
    pub reference_reset: bool,
    /// The basic state that became the reference on a reset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reached: Option<BasicStateId>,
    /// The cell's agent was replaced by a human, so its decision was dropped.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub held: bool,
    /// Written by a human player rather than an agent.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub human: bool,
}

/// A live simulation: current grid, shared reference and the random stream.
#[derive(Debug, Clone)]
pub struct World {
    config: SimConfig,
    catalogue: Catalogue,
    alpha: Alpha,
    grid: Grid,
    reference: Grid,
    rng: ChaCha8Rng,
    step: u64,
    held_cell: Option<usize>,
}

impl World {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let catalogue = config.load_catalogue()?;
        World::with_catalogue(config, catalogue)
    }

    pub fn with_catalogue(config: SimConfig, catalogue: Catalogue) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let cells = config.n * config.n;
        let grid = match config.init {
            InitMode::AllWhite => Grid::filled(config.n, config.k, ColorId::WHITE)?,
            InitMode::UniformRandom => {
                let cells = (0..cells)
                    .map(|_| ColorId(rng.gen_range(0..config.k) as u8))
                    .collect();
                Grid::new(config.n, config.k, cells)?
            }
        };
        Ok(World {
            alpha: Alpha::new(config.n, config.k),
            reference: grid.clone(),
            grid,
            config,
            catalogue,
            rng,
            step: 0,
            held_cell: None,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn catalogue(&self) -> &Catalogue {
        &self.catalogue
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn reference(&self) -> &Grid {
        &self.reference
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    /// Number of agent steps taken so far.
    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Marks a cell as human-controlled; its agent stops acting.
    pub fn set_held_cell(&mut self, cell: Option<usize>) {
        self.held_cell = cell;
    }

    pub fn held_cell(&self) -> Option<usize> {
        self.held_cell
    }

    pub fn step(&mut self) -> Result<Event> {
        let cell = self.rng.gen_range(0..self.grid.len());
        let records = candidates(
            &self.grid,
            &self.catalogue,
            self.config.horizon,
            self.alpha,
            &self.reference,
        )?;
        let desirable_count = records.iter().filter(|r| r.is_desirable()).count();
        let d_max = records.iter().map(|r| r.d).reduce(f64::max);
        let chosen = select_target(&records, &mut self.rng);
        let target = chosen.map(|r| r.target.id());
        let decided = agent_decide(
            cell,
            &self.grid,
            chosen.map(|r| &r.target),
            self.config.p_random,
            &mut self.rng,
        );
        let held = self.held_cell == Some(cell);
        let action = match decided {
            AgentAction::SetColor(c) if !held => {
                self.grid.set(cell, c);
                Some(c)
            }
            _ => None,
        };
        let reached = self.maybe_reset_reference()?;
        let event = Event {
            step: self.step,
            cell,
            action,
            target,
            d_max,
            desirable_count,
            reference_reset: reached.is_some(),
            reached: reached.map(|b| b.id()),
            held: held && matches!(decided, AgentAction::SetColor(_)),
            human: false,
        };
        self.step += 1;
        Ok(event)
    }

    /// Writes a colour chosen outside the agent loop, then applies the
    /// reference-reset rule. The event carries the current step counter
    /// without advancing it.
    pub fn apply_external(&mut self, cell: usize, color: ColorId) -> Result<Event> {
        let next = self.grid.with_cell(cell, color)?;
        let changed = next != self.grid;
        self.grid = next;
        let reached = self.maybe_reset_reference()?;
        Ok(Event {
            step: self.step,
            cell,
            action: changed.then_some(color),
            target: None,
            d_max: None,
            desirable_count: 0,
            reference_reset: reached.is_some(),
            reached: reached.map(|b| b.id()),
            held: false,
            human: true,
        })
    }

    /// Adopts the current grid as the shared reference when it is exactly a
    /// basic state that was unexpected from the outgoing reference.
    pub fn maybe_reset_reference(&mut self) -> Result<Option<BasicState>> {
        let Some(basic) = self.catalogue.exact_match(&self.grid)? else {
            return Ok(None);
        };
        let h_ref = hamming(&self.reference, &self.grid)?;
        let u = self.alpha.0 * h_ref as f64 - basic.c_d as f64;
        if u > 0.0 {
            self.reference = self.grid.clone();
            Ok(Some(basic))
        } else {
            Ok(None)
        }
    }
}

/// A complete run: configuration, starting grid and every event.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: SimConfig,
    pub initial: Grid,
    pub events: Vec<Event>,
    pub reached: Vec<BasicStateId>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum LogRecord {
    Header { config: SimConfig, initial: Vec<ColorId> },
    Event(Event),
}

impl RunLog {
    pub fn new(config: SimConfig, initial: Grid) -> Self {
        RunLog {
            config,
            initial,
            events: Vec::new(),
            reached: Vec::new(),
        }
    }

    pub fn push(&mut self, event: Event) {
        if let Some(id) = &event.reached {
            self.reached.push(id.clone());
        }
        self.events.push(event);
    }

    /// Grid after each event, in order.
    pub fn states(&self) -> impl Iterator<Item = Grid> + '_ {
        let mut grid = self.initial.clone();
        self.events.iter().map(move |e| {
            if let Some(c) = e.action {
                grid.set(e.cell, c);
            }
            grid.clone()
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = LogRecord::Header {
            config: self.config.clone(),
            initial: self.initial.cells().to_vec(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, &LogRecord::Event(e.clone()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<RunLog> {
        let mut log: Option<RunLog> = None;
        for (i, line) in r.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
            match (rec, log.as_mut()) {
                (LogRecord::Header { config, initial }, None) => {
                    let grid = Grid::new(config.n, config.k, initial)
                        .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
                    log = Some(RunLog::new(config, grid));
                }
                (LogRecord::Header { .. }, Some(_)) => {
                    return Err(Error::Parse { line: lineno, msg: "second header record".into() })
                }
                (LogRecord::Event(_), None) => {
                    return Err(Error::Parse { line: lineno, msg: "event before header".into() })
                }
                (LogRecord::Event(e), Some(log)) => {
                    let n2 = log.initial.len();
                    if e.cell >= n2 || e.action.is_some_and(|c| c.index() >= log.config.k) {
                        return Err(Error::Parse { line: lineno, msg: "cell or colour out of range".into() });
                    }
                    log.push(e);
                }
            }
        }
        log.ok_or(Error::Parse { line: 0, msg: "empty log".into() })
    }

    pub fn from_jsonl(text: &str) -> Result<RunLog> {
        RunLog::read_from(text.as_bytes())
    }
}

/// Runs `config.steps` steps from the configured initial grid.
pub fn run(config: &SimConfig) -> Result<RunLog> {
    let world = World::new(config.clone())?;
    run_world(world)
}

pub fn run_world(mut world: World) -> Result<RunLog> {
    let mut log = RunLog::new(world.config.clone(), world.grid.clone());
    for _ in 0..world.config.steps {
        let e = world.step()?;
        log.push(e);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64, steps: u64) -> SimConfig {
        SimConfig { seed, steps, ..SimConfig::default() }
    }

    #[test]
    fn defaults_match_reported_parameters() {
        let c = SimConfig::default();
        assert_eq!((c.n, c.k, c.horizon), (5, 2, 7));
        assert_eq!(c.p_random, 0.5);
    }

    #[test]
    fn zero_steps() {
        let log = run(&cfg(3, 0)).unwrap();
        assert!(log.events.is_empty());
        let w = World::new(cfg(3, 0)).unwrap();
        assert_eq!(w.reference(), w.grid());
        assert_eq!(&log.initial, w.grid());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = run(&cfg(17, 10_000)).unwrap();
        let b = run(&cfg(17, 10_000)).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let c = run(&cfg(18, 10_000)).unwrap();
        assert_ne!(a.to_jsonl(), c.to_jsonl());
    }

    #[test]
    fn single_cell_changes_and_valid_resets() {
        let log = run(&cfg(5, 20_000)).unwrap();
        let cat = log.config.load_catalogue().unwrap();
        let alpha = Alpha::new(5, 2);
        let mut prev = log.initial.clone();
        let mut reference = log.initial.clone();
        let mut last_reached: Option<BasicStateId> = None;
        for (e, g) in log.events.iter().zip(log.states()) {
            assert!(hamming(&prev, &g).unwrap() <= 1);
            if e.reference_reset {
                let b = cat.exact_match(&g).unwrap().expect("reset grid is a basic state");
                assert_eq!(Some(b.id()), e.reached);
                let u = alpha.0 * hamming(&reference, &g).unwrap() as f64 - b.c_d as f64;
                assert!(u > 0.0);
                assert_ne!(last_reached.as_ref(), Some(&b.id()));
                last_reached = Some(b.id());
                reference = g.clone();
            }
            prev = g;
        }
        assert_eq!(
            log.reached,
            log.events.iter().filter_map(|e| e.reached.clone()).collect::<Vec<_>>()
        );
        assert!(log.reached.len() > 50);
    }

    #[test]
    fn reset_from_plain_to_diagonal() {
        let config = SimConfig { init: InitMode::AllWhite, ..cfg(1, 0) };
        let mut w = World::new(config).unwrap();
        // one cell short of a black diagonal on white
        for i in 0..4 {
            let e = w.apply_external(i * 6, ColorId::BLACK).unwrap();
            assert!(!e.reference_reset);
        }
        let e = w.apply_external(24, ColorId::BLACK).unwrap();
        assert!(e.reference_reset);
        assert_eq!(w.reference(), w.grid());
        // back at the reference: no second reset
        assert!(w.maybe_reset_reference().unwrap().is_none());
    }

    #[test]
    fn no_reset_off_pattern_or_at_reference() {
        let config = SimConfig { init: InitMode::AllWhite, ..cfg(1, 0) };
        let mut w = World::new(config).unwrap();
        assert!(w.maybe_reset_reference().unwrap().is_none());
        let e = w.apply_external(3, ColorId::BLACK).unwrap();
        assert!(!e.reference_reset);
    }

    #[test]
    fn on_diagonal_agent_follows_target() {
        // black grid, reference black, one diagonal cell already white
        let config = SimConfig { init: InitMode::AllWhite, ..cfg(9, 0) };
        let mut w = World::new(config).unwrap();
        for c in 0..25 {
            w.apply_external(c, ColorId::BLACK).unwrap();
        }
        w.reference = w.grid.clone();
        w.apply_external(0, ColorId::WHITE).unwrap();
        for _ in 0..200 {
            let before = w.grid.clone();
            let e = w.step().unwrap();
            if e.cell % 6 == 0 && before.get(e.cell) == ColorId::BLACK {
                assert_eq!(e.action, Some(ColorId::WHITE));
                break;
            }
            assert!(e.target.is_some());
            assert_eq!(e.action, None);
        }
    }

    #[test]
    fn fresh_reference_acts_randomly() {
        let config = SimConfig { init: InitMode::AllWhite, ..cfg(4, 0) };
        let mut w = World::new(config).unwrap();
        let e = w.step().unwrap();
        assert!(e.target.is_none());
        assert_eq!(e.desirable_count, 0);
    }

    #[test]
    fn held_cell_never_moves() {
        let mut w = World::new(cfg(8, 0)).unwrap();
        w.set_held_cell(Some(12));
        let start = w.grid().get(12);
        let mut held = 0;
        for _ in 0..5000 {
            let e = w.step().unwrap();
            held += usize::from(e.held);
            assert_eq!(w.grid().get(12), start);
        }
        assert!(held > 0);
    }

    #[test]
    fn jsonl_round_trip_and_errors() {
        let log = run(&cfg(2, 500)).unwrap();
        let text = log.to_jsonl();
        assert_eq!(RunLog::from_jsonl(&text).unwrap(), log);

        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "{not json";
        match RunLog::from_jsonl(&lines.join("\n")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(RunLog::from_jsonl("").is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(World::new(SimConfig { n: 1, ..SimConfig::default() }).is_err());
        assert!(World::new(SimConfig { k: 1, ..SimConfig::default() }).is_err());
        assert!(World::new(SimConfig { p_random: 1.5, ..SimConfig::default() }).is_err());
        assert!(World::new(SimConfig { catalogue: "/nonexistent".into(), ..SimConfig::default() }).is_err());
    }
}
