//! Run configuration in TOML syntax.
//!
//! Every problem found in a file is reported, each with the line it occurs on.
//! Unknown sections and keys are errors. Values left out take the defaults of
//! [`RunConfig::default`].

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::estimators::ConstantsConfig;
use crate::expr::Expr;
use crate::mesh::Rect;

pub const PRESETS: [&str; 5] = ["smooth", "circle", "dumbbell", "random", "zero"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, when the problem can be tied to one.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// All problems found in one configuration text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSection {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSection {
    /// Macro cells per direction; each macro square is split into two triangles.
    pub nx: u32,
    pub ny: u32,
    /// Uniform refinements of the macro mesh, each halving the mesh size.
    pub refinements: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub epsilon: f64,
    /// Preset name or expression in `x`, `y`.
    pub initial: String,
    /// Preset name (`smooth` or `zero`) or expression in `x`, `y`, `t`.
    pub forcing: String,
    /// Drop the reaction term, leaving the heat equation.
    pub heat_only: bool,
    /// Half-width of the `random` preset's nodal noise.
    pub noise_amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSection {
    pub final_time: f64,
    pub step: f64,
    pub adaptive: bool,
    /// Target for the slab time term `k_n L_1` when `adaptive` is set.
    pub tolerance: f64,
    pub min_step: f64,
    pub max_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptSection {
    pub enabled: bool,
    pub marking_fraction: f64,
    pub max_generation: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSection {
    /// Defaults to `diam(Ω)/π`.
    pub c_pf: Option<f64>,
    pub c_tilde: f64,
    pub c_sz: f64,
    pub c_omega: f64,
    /// Spatial dimension used by the bound formulas (2 or 3).
    pub dimension: u32,
    pub safety: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub directory: String,
    pub vtk: bool,
    pub checkpoints: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub newton_abs_tol: f64,
    pub newton_maxit: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub mesh: MeshSection,
    pub model: ModelSection,
    pub time: TimeSection,
    pub adapt: AdaptSection,
    pub constants: ConstantsSection,
    pub output: OutputSection,
    pub solver: SolverSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainSection {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            },
            mesh: MeshSection {
                nx: 8,
                ny: 8,
                refinements: 0,
            },
            model: ModelSection {
                epsilon: 0.1,
                initial: "circle".into(),
                forcing: "zero".into(),
                heat_only: false,
                noise_amplitude: 0.1,
                seed: 0,
            },
            time: TimeSection {
                final_time: 0.1,
                step: 0.0025,
                adaptive: false,
                tolerance: 1e-2,
                min_step: 1e-6,
                max_step: 0.1,
            },
            adapt: AdaptSection {
                enabled: false,
                marking_fraction: 0.5,
                max_generation: 8,
            },
            constants: ConstantsSection {
                c_pf: None,
                c_tilde: 1.0,
                c_sz: 1.0,
                c_omega: 1.0,
                dimension: 2,
                safety: crate::spectral::DEFAULT_SAFETY,
            },
            output: OutputSection {
                directory: "output".into(),
                vtk: true,
                checkpoints: true,
            },
            solver: SolverSection {
                newton_tol: 1e-10,
                newton_abs_tol: 1e-14,
                newton_maxit: 50,
            },
        }
    }
}

impl RunConfig {
    pub fn rect(&self) -> Rect {
        Rect::new(
            self.domain.x0,
            self.domain.x1,
            self.domain.y0,
            self.domain.y1,
        )
    }

    pub fn constants_config(&self) -> ConstantsConfig {
        let c = &self.constants;
        ConstantsConfig {
            c_pf: c
                .c_pf
                .unwrap_or_else(|| ConstantsConfig::for_domain(&self.rect()).c_pf),
            c_tilde: c.c_tilde,
            c_sz: c.c_sz,
            c_omega: c.c_omega,
            safety: c.safety,
        }
    }

    /// TOML text that [`parse_config`] maps back to `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let lines = LineIndex::new(text);
    let (doc, syntax) = DeTable::parse_recoverable(text);
    if !syntax.is_empty() {
        return Err(ConfigErrors(
            syntax
                .into_iter()
                .map(|e| ConfigError {
                    line: e.span().map(|s| lines.line(s.start)),
                    message: e.message().trim().to_string(),
                })
                .collect(),
        ));
    }
    let mut r = Reader {
        lines,
        errors: Vec::new(),
    };
    let mut cfg = RunConfig::default();
    for (name, value) in doc.get_ref() {
        let line = r.lines.line(name.span().start);
        let Some(table) = value.get_ref().as_table() else {
            r.error(line, format!("'{}' must be a section", name.get_ref()));
            continue;
        };
        match name.get_ref().as_ref() {
            "domain" => r.domain(table, &mut cfg.domain),
            "mesh" => r.mesh(table, &mut cfg.mesh),
            "model" => r.model(table, &mut cfg.model),
            "time" => r.time(table, &mut cfg.time),
            "adapt" => r.adapt(table, &mut cfg.adapt),
            "constants" => r.constants(table, &mut cfg.constants),
            "output" => r.output(table, &mut cfg.output),
            "solver" => r.solver(table, &mut cfg.solver),
            other => r.error(line, format!("unknown section [{other}]")),
        }
    }
    r.cross_checks(&cfg);
    r.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
    if r.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(r.errors))
    }
}

struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        Self { starts }
    }

    fn line(&self, offset: usize) -> usize {
        self.starts.partition_point(|&s| s <= offset)
    }
}

type Entry<'a, 'i> = (&'a str, usize, &'a Spanned<DeValue<'i>>);

struct Reader {
    lines: LineIndex,
    errors: Vec<ConfigError>,
}

impl Reader {
    fn error(&mut self, line: usize, message: String) {
        self.errors.push(ConfigError {
            line: Some(line),
            message,
        });
    }

    fn line_of(&self, span: Range<usize>) -> usize {
        self.lines.line(span.start)
    }

    /// Lists the entries of a section, reporting keys not in `known`.
    fn entries<'a, 'i>(
        &mut self,
        section: &str,
        table: &'a DeTable<'i>,
        known: &[&str],
    ) -> Vec<Entry<'a, 'i>> {
        let mut out = Vec::new();
        for (k, v) in table {
            let line = self.line_of(k.span());
            if known.contains(&k.get_ref().as_ref()) {
                out.push((k.get_ref().as_ref(), line, v));
            } else {
                self.error(
                    line,
                    format!("unknown key '{}' in [{section}]", k.get_ref()),
                );
            }
        }
        out
    }

    fn float(&mut self, key: &str, line: usize, v: &DeValue<'_>) -> Option<f64> {
        let parsed = match v {
            DeValue::Float(f) => f.as_str().parse::<f64>().ok(),
            DeValue::Integer(i) => i64::from_str_radix(i.as_str(), i.radix())
                .ok()
                .map(|i| i as f64),
            _ => None,
        };
        match parsed {
            Some(x) if x.is_finite() => Some(x),
            Some(_) => {
                self.error(line, format!("'{key}' must be finite"));
                None
            }
            None => {
                self.error(
                    line,
                    format!("'{key}' must be a number, found {}", v.type_str()),
                );
                None
            }
        }
    }

    fn uint(&mut self, key: &str, line: usize, v: &DeValue<'_>) -> Option<u64> {
        if let DeValue::Integer(i) = v {
            if let Ok(n) = u64::from_str_radix(i.as_str(), i.radix()) {
                return Some(n);
            }
            self.error(line, format!("'{key}' must be a non-negative integer"));
            return None;
        }
        self.error(
            line,
            format!("'{key}' must be an integer, found {}", v.type_str()),
        );
        None
    }

    fn uint32(&mut self, key: &str, line: usize, v: &DeValue<'_>) -> Option<u32> {
        let n = self.uint(key, line, v)?;
        match u32::try_from(n) {
            Ok(n) => Some(n),
            Err(_) => {
                self.error(line, format!("'{key}' is too large"));
                None
            }
        }
    }

    fn boolean(&mut self, key: &str, line: usize, v: &DeValue<'_>) -> Option<bool> {
        match v {
            DeValue::Boolean(b) => Some(*b),
            _ => {
                self.error(
                    line,
                    format!("'{key}' must be a boolean, found {}", v.type_str()),
                );
                None
            }
        }
    }

    fn string(&mut self, key: &str, line: usize, v: &DeValue<'_>) -> Option<String> {
        match v {
            DeValue::String(s) => Some(s.to_string()),
            _ => {
                self.error(
                    line,
                    format!("'{key}' must be a string, found {}", v.type_str()),
                );
                None
            }
        }
    }

    fn require(&mut self, ok: bool, key: &str, line: usize, constraint: &str) -> bool {
        if !ok {
            self.error(line, format!("'{key}' must be {constraint}"));
        }
        ok
    }

    fn positive(&mut self, key: &str, line: usize, v: &DeValue<'_>, slot: &mut f64) {
        if let Some(x) = self.float(key, line, v) {
            if self.require(x > 0.0, key, line, "positive") {
                *slot = x;
            }
        }
    }

    fn domain(&mut self, t: &DeTable<'_>, s: &mut DomainSection) {
        for (key, line, v) in self.entries("domain", t, &["x0", "x1", "y0", "y1"]) {
            let Some(x) = self.float(key, line, v.get_ref()) else {
                continue;
            };
            match key {
                "x0" => s.x0 = x,
                "x1" => s.x1 = x,
                "y0" => s.y0 = x,
                _ => s.y1 = x,
            }
        }
    }

    fn mesh(&mut self, t: &DeTable<'_>, s: &mut MeshSection) {
        for (key, line, v) in self.entries("mesh", t, &["nx", "ny", "refinements"]) {
            let Some(n) = self.uint32(key, line, v.get_ref()) else {
                continue;
            };
            match key {
                "refinements" => {
                    if self.require(n <= 8, key, line, "at most 8") {
                        s.refinements = n;
                    }
                }
                _ => {
                    if self.require((1..=1024).contains(&n), key, line, "between 1 and 1024") {
                        if key == "nx" {
                            s.nx = n;
                        } else {
                            s.ny = n;
                        }
                    }
                }
            }
        }
    }

    fn field_spec(
        &mut self,
        key: &str,
        line: usize,
        text: String,
        allow_time: bool,
    ) -> Option<String> {
        if PRESETS.contains(&text.as_str()) {
            if key == "forcing" && !matches!(text.as_str(), "smooth" | "zero") {
                self.error(
                    line,
                    format!("'{text}' is not a forcing preset (use smooth, zero or an expression)"),
                );
                return None;
            }
            return Some(text);
        }
        match Expr::parse(&text) {
            Ok(e) => {
                if !allow_time && e.depends_on_time() {
                    self.error(line, format!("'{key}' may not depend on t"));
                    return None;
                }
                Some(text)
            }
            Err(e) => {
                self.error(
                    line,
                    format!("'{key}' is neither a preset nor a valid expression: {e}"),
                );
                None
            }
        }
    }

    fn model(&mut self, t: &DeTable<'_>, s: &mut ModelSection) {
        let known = [
            "epsilon",
            "initial",
            "forcing",
            "heat_only",
            "noise_amplitude",
            "seed",
        ];
        for (key, line, v) in self.entries("model", t, &known) {
            let v = v.get_ref();
            match key {
                "epsilon" => self.positive(key, line, v, &mut s.epsilon),
                "initial" | "forcing" => {
                    let Some(text) = self.string(key, line, v) else {
                        continue;
                    };
                    if let Some(spec) = self.field_spec(key, line, text, key == "forcing") {
                        if key == "initial" {
                            s.initial = spec;
                        } else {
                            s.forcing = spec;
                        }
                    }
                }
                "heat_only" => {
                    if let Some(b) = self.boolean(key, line, v) {
                        s.heat_only = b;
                    }
                }
                "noise_amplitude" => {
                    if let Some(x) = self.float(key, line, v) {
                        if self.require(x >= 0.0, key, line, "non-negative") {
                            s.noise_amplitude = x;
                        }
                    }
                }
                _ => {
                    if let Some(n) = self.uint(key, line, v) {
                        s.seed = n;
                    }
                }
            }
        }
    }

    fn time(&mut self, t: &DeTable<'_>, s: &mut TimeSection) {
        let known = [
            "final_time",
            "step",
            "adaptive",
            "tolerance",
            "min_step",
            "max_step",
        ];
        for (key, line, v) in self.entries("time", t, &known) {
            let v = v.get_ref();
            match key {
                "final_time" => self.positive(key, line, v, &mut s.final_time),
                "step" => self.positive(key, line, v, &mut s.step),
                "tolerance" => self.positive(key, line, v, &mut s.tolerance),
                "min_step" => self.positive(key, line, v, &mut s.min_step),
                "max_step" => self.positive(key, line, v, &mut s.max_step),
                _ => {
                    if let Some(b) = self.boolean(key, line, v) {
                        s.adaptive = b;
                    }
                }
            }
        }
    }

    fn adapt(&mut self, t: &DeTable<'_>, s: &mut AdaptSection) {
        for (key, line, v) in self.entries(
            "adapt",
            t,
            &["enabled", "marking_fraction", "max_generation"],
        ) {
            let v = v.get_ref();
            match key {
                "enabled" => {
                    if let Some(b) = self.boolean(key, line, v) {
                        s.enabled = b;
                    }
                }
                "marking_fraction" => {
                    if let Some(x) = self.float(key, line, v) {
                        if self.require(x > 0.0 && x <= 1.0, key, line, "in (0, 1]") {
                            s.marking_fraction = x;
                        }
                    }
                }
                _ => {
                    if let Some(n) = self.uint32(key, line, v) {
                        if self.require(n <= 40, key, line, "at most 40") {
                            s.max_generation = n;
                        }
                    }
                }
            }
        }
    }

    fn constants(&mut self, t: &DeTable<'_>, s: &mut ConstantsSection) {
        let known = ["c_pf", "c_tilde", "c_sz", "c_omega", "dimension", "safety"];
        for (key, line, v) in self.entries("constants", t, &known) {
            let v = v.get_ref();
            match key {
                "c_pf" => {
                    let mut x = 0.0;
                    self.positive(key, line, v, &mut x);
                    if x > 0.0 {
                        s.c_pf = Some(x);
                    }
                }
                "c_tilde" => self.positive(key, line, v, &mut s.c_tilde),
                "c_sz" => self.positive(key, line, v, &mut s.c_sz),
                "c_omega" => self.positive(key, line, v, &mut s.c_omega),
                "dimension" => {
                    if let Some(n) = self.uint32(key, line, v) {
                        if self.require(n == 2 || n == 3, key, line, "2 or 3") {
                            s.dimension = n;
                        }
                    }
                }
                _ => {
                    if let Some(x) = self.float(key, line, v) {
                        if self.require(x >= 0.0, key, line, "non-negative") {
                            s.safety = x;
                        }
                    }
                }
            }
        }
    }

    fn output(&mut self, t: &DeTable<'_>, s: &mut OutputSection) {
        for (key, line, v) in self.entries("output", t, &["directory", "vtk", "checkpoints"]) {
            let v = v.get_ref();
            match key {
                "directory" => {
                    if let Some(d) = self.string(key, line, v) {
                        if self.require(!d.is_empty(), key, line, "non-empty") {
                            s.directory = d;
                        }
                    }
                }
                "vtk" => {
                    if let Some(b) = self.boolean(key, line, v) {
                        s.vtk = b;
                    }
                }
                _ => {
                    if let Some(b) = self.boolean(key, line, v) {
                        s.checkpoints = b;
                    }
                }
            }
        }
    }

    fn solver(&mut self, t: &DeTable<'_>, s: &mut SolverSection) {
        for (key, line, v) in self.entries(
            "solver",
            t,
            &["newton_tol", "newton_abs_tol", "newton_maxit"],
        ) {
            let v = v.get_ref();
            match key {
                "newton_tol" => self.positive(key, line, v, &mut s.newton_tol),
                "newton_abs_tol" => {
                    if let Some(x) = self.float(key, line, v) {
                        if self.require(x >= 0.0, key, line, "non-negative") {
                            s.newton_abs_tol = x;
                        }
                    }
                }
                _ => {
                    if let Some(n) = self.uint32(key, line, v) {
                        if self.require(n >= 1, key, line, "at least 1") {
                            s.newton_maxit = n;
                        }
                    }
                }
            }
        }
    }

    fn cross_checks(&mut self, c: &RunConfig) {
        let mut fail = |m: &str| {
            self.errors.push(ConfigError {
                line: None,
                message: m.to_string(),
            })
        };
        if !(c.domain.x1 > c.domain.x0 && c.domain.y1 > c.domain.y0) {
            fail("[domain] requires x0 < x1 and y0 < y1");
        }
        if c.time.min_step > c.time.max_step {
            fail("[time] requires min_step <= max_step");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse_config("[model]\nepsilon = 0.05\n").unwrap();
        assert_eq!(cfg.model.epsilon, 0.05);
        let d = RunConfig::default();
        assert_eq!(cfg.mesh, d.mesh);
        assert_eq!(cfg.time, d.time);
        assert_eq!(parse_config("").unwrap(), d);
    }

    #[test]
    fn rejects_negative_epsilon_with_line() {
        let err = parse_config("[model]\n\nepsilon = -1\n").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, Some(3));
        assert!(err.0[0].message.contains("epsilon") && err.0[0].message.contains("positive"));
    }

    #[test]
    fn accumulates_all_errors() {
        let text = "[model]\nepsilon = -1\ncolour = 3\n[time]\nstep = \"big\"\n[bogus]\nx = 1\n[mesh]\nnx = 0\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<_> = err.0.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![Some(2), Some(3), Some(5), Some(6), Some(9)]);
        assert!(err.to_string().contains("unknown key 'colour' in [model]"));
        assert!(err.to_string().contains("unknown section [bogus]"));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let err = parse_config("[model]\nepsilon = = 2\n").unwrap_err();
        assert_eq!(err.0[0].line, Some(2));
        let err = parse_config("epsilon = 0.1\n").unwrap_err();
        assert!(err.0[0].message.contains("section"));
    }

    #[test]
    fn expressions_and_presets() {
        let cfg =
            parse_config("[model]\ninitial = \"sin(pi*x)*sin(pi*y)\"\nforcing = \"exp(-t)*x\"\n")
                .unwrap();
        assert_eq!(cfg.model.forcing, "exp(-t)*x");
        for p in PRESETS {
            assert!(parse_config(&format!("[model]\ninitial = \"{p}\"\n")).is_ok());
        }
        assert!(parse_config("[model]\ninitial = \"t * x\"\n").is_err());
        assert!(parse_config("[model]\nforcing = \"circle\"\n").is_err());
        let err = parse_config("[model]\ninitial = \"sin(\"\n").unwrap_err();
        assert_eq!(err.0[0].line, Some(2));
    }

    #[test]
    fn cross_field_constraints() {
        let err = parse_config("[domain]\nx0 = 1.0\nx1 = 0.0\n").unwrap_err();
        assert_eq!(err.0[0].line, None);
        assert!(parse_config("[time]\nmin_step = 1.0\nmax_step = 0.5\n").is_err());
        assert!(parse_config("[constants]\ndimension = 4\n").is_err());
        assert!(parse_config("[adapt]\nmarking_fraction = 1.5\n").is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.constants.c_pf = Some(0.3);
        cfg.model.initial = "tanh((0.3 - x)/eps)".into();
        cfg.time.adaptive = true;
        let text = cfg.to_toml();
        assert_eq!(parse_config(&text).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(parse_config(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn constants_default_to_domain_poincare() {
        let cfg = parse_config("[domain]\nx1 = 2.0\n").unwrap();
        let c = cfg.constants_config();
        assert!((c.c_pf - 5f64.sqrt() / std::f64::consts::PI).abs() < 1e-15);
    }
}
