//! Line-oriented text format for pulse programs.
//!
//! ```text
//! # comment
//! pulse 3-4 +y 60deg
//! pulse 1-3 -y 1.2309594173407747rad phase 0.1
//! wait 2us detuning 0.785Mrad
//! readout Re14
//! ```
//!
//! Angles take `rad`, `deg` or π expressions (`pi/2`, `2pi/3`, `0.5*pi`);
//! a bare number is radians. Durations need `s`, `ms`, `us` or `ns`.
//! Detunings take `rad/s`, `krad`, `Mrad` (angular) or `Hz`, `kHz`, `MHz`
//! (multiplied by 2π); a bare number is rad/s.

use std::f64::consts::PI;

use super::{Observable, Pulse, PulseError, PulseEvent, PulseProgram, Transition, Wait};

const ANGLE_UNITS: &[(&str, f64)] = &[("rad", 1.0), ("deg", PI / 180.0)];
const DURATION_UNITS: &[(&str, f64)] = &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("µs", 1e-6), ("ns", 1e-9)];
const DETUNING_UNITS: &[(&str, f64)] = &[
    ("rad/s", 1.0),
    ("krad", 1e3),
    ("krad/s", 1e3),
    ("Mrad", 1e6),
    ("Mrad/s", 1e6),
    ("Hz", 2.0 * PI),
    ("kHz", 2.0 * PI * 1e3),
    ("MHz", 2.0 * PI * 1e6),
];

#[derive(Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Cursor<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
    pos: usize,
    end_column: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    tokens.push(Token { text: &text[s..i], column: text[..s].chars().count() + 1 });
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            tokens.push(Token { text: &text[s..], column: text[..s].chars().count() + 1 });
        }
        Cursor { line, tokens, pos: 0, end_column: text.chars().count() + 1 }
    }

    fn error(&self, column: usize, message: impl Into<String>) -> PulseError {
        PulseError::Parse { line: self.line, column, message: message.into() }
    }

    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self, what: &str) -> Result<Token<'a>, PulseError> {
        let t = self.peek().ok_or_else(|| self.error(self.end_column, format!("expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn finish(&self) -> Result<(), PulseError> {
        match self.peek() {
            Some(t) => Err(self.error(t.column, format!("unexpected `{}`", t.text))),
            None => Ok(()),
        }
    }

    /// A number with an attached or separate unit from `units`.
    fn quantity(&mut self, what: &str, units: &[(&str, f64)], bare: Option<f64>) -> Result<f64, PulseError> {
        let tok = self.next(what)?;
        if let Some((value, unit)) = split_number(tok.text) {
            let unit = if unit.is_empty() {
                match self.peek().and_then(|t| lookup(units, t.text)) {
                    Some(scale) => {
                        self.pos += 1;
                        Some(scale)
                    }
                    None => bare,
                }
            } else {
                lookup(units, unit)
            };
            let scale = unit.ok_or_else(|| {
                let names: Vec<&str> = units.iter().map(|u| u.0).collect();
                self.error(tok.column, format!("{what} `{}` needs a unit ({})", tok.text, names.join(", ")))
            })?;
            return Ok(value * scale);
        }
        Err(self.error(tok.column, format!("malformed {what} `{}`", tok.text)))
    }

    fn angle(&mut self, what: &str) -> Result<f64, PulseError> {
        if let Some(tok) = self.peek() {
            if tok.text.contains("pi") {
                self.pos += 1;
                return parse_pi(tok.text)
                    .ok_or_else(|| self.error(tok.column, format!("malformed {what} `{}`", tok.text)));
            }
        }
        self.quantity(what, ANGLE_UNITS, Some(1.0))
    }
}

fn lookup(units: &[(&str, f64)], name: &str) -> Option<f64> {
    units.iter().find(|u| u.0 == name).map(|u| u.1)
}

/// Longest finite numeric prefix and the remaining suffix.
fn split_number(s: &str) -> Option<(f64, &str)> {
    let mut bounds: Vec<usize> = s.char_indices().map(|(i, _)| i).skip(1).collect();
    bounds.push(s.len());
    bounds
        .into_iter()
        .rev()
        .find_map(|i| s[..i].parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| (v, &s[i..])))
        .filter(|(_, rest)| !rest.starts_with(|c: char| c.is_ascii_digit() || c == '.'))
}

/// `[sign][coef][*]pi[/den]`.
fn parse_pi(s: &str) -> Option<f64> {
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s.strip_prefix('+').unwrap_or(s)),
    };
    let at = body.find("pi")?;
    let coef = body[..at].trim_end_matches('*');
    let coef = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().ok()? };
    let rest = &body[at + 2..];
    let den = match rest.strip_prefix('/') {
        Some(d) => d.parse::<f64>().ok().filter(|d| *d != 0.0)?,
        None if rest.is_empty() => 1.0,
        None => return None,
    };
    let v = sign * coef * PI / den;
    v.is_finite().then_some(v)
}

fn parse_line(cur: &mut Cursor<'_>) -> Result<Option<PulseEvent>, PulseError> {
    let Some(head) = cur.peek() else { return Ok(None) };
    cur.pos += 1;
    let event = match head.text {
        "pulse" => {
            let tok = cur.next("transition")?;
            let transition = parse_transition(tok.text).map_err(|m| cur.error(tok.column, m))?;
            let tok = cur.next("axis")?;
            let axis = tok.text.parse().map_err(|m: String| cur.error(tok.column, m))?;
            let column = cur.peek().map_or(cur.end_column, |t| t.column);
            let angle = cur.angle("angle")?;
            if !(0.0..2.0 * PI).contains(&angle) {
                return Err(cur.error(column, format!("angle {angle} rad is outside [0, 2π)")));
            }
            let phase = match cur.peek() {
                Some(t) if t.text == "phase" => {
                    cur.pos += 1;
                    cur.angle("phase")?
                }
                _ => 0.0,
            };
            PulseEvent::Pulse(Pulse { transition, axis, angle, phase })
        }
        "wait" => {
            let column = cur.peek().map_or(cur.end_column, |t| t.column);
            let duration = cur.quantity("duration", DURATION_UNITS, None)?;
            if duration < 0.0 {
                return Err(cur.error(column, "duration must be non-negative"));
            }
            let tok = cur.next("`detuning`")?;
            if tok.text != "detuning" {
                return Err(cur.error(tok.column, format!("expected `detuning`, found `{}`", tok.text)));
            }
            let detuning = cur.quantity("detuning", DETUNING_UNITS, Some(1.0))?;
            PulseEvent::Wait(Wait { duration, detuning })
        }
        "readout" => {
            let tok = cur.next("readout element")?;
            let element: Observable = tok.text.parse().map_err(|m: String| cur.error(tok.column, m))?;
            PulseEvent::Readout { element }
        }
        other => return Err(cur.error(head.column, format!("unknown statement `{other}`"))),
    };
    cur.finish()?;
    Ok(Some(event))
}

fn parse_transition(s: &str) -> Result<Transition, String> {
    let (n, m) = s.split_once('-').ok_or_else(|| format!("malformed transition `{s}` (expected n-m)"))?;
    let level = |x: &str| x.parse::<usize>().map_err(|_| format!("malformed transition `{s}`"));
    let (n, m) = (level(n)?, level(m)?);
    Transition::from_levels(n, m).map_err(|e| e.to_string())
}

pub fn parse(text: &str) -> Result<PulseProgram, PulseError> {
    let mut events = Vec::new();
    let mut readout_started = false;
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let mut cur = Cursor::new(i + 1, body);
        let column = cur.peek().map_or(1, |t| t.column);
        let Some(event) = parse_line(&mut cur)? else { continue };
        match event {
            PulseEvent::Readout { .. } => readout_started = true,
            _ if readout_started => {
                return Err(PulseError::Parse {
                    line: i + 1,
                    column,
                    message: "pulses and waits must come before readout markers".into(),
                })
            }
            _ => {}
        }
        events.push(event);
    }
    Ok(PulseProgram::new(events))
}

/// Canonical text in SI units; `parse(&print(p))` reproduces `p.events`.
pub fn print(p: &PulseProgram) -> String {
    let mut out = String::new();
    for e in &p.events {
        match e {
            PulseEvent::Pulse(q) => {
                out += &format!("pulse {} {} {:?}rad", q.transition, q.axis, q.angle);
                if q.phase != 0.0 {
                    out += &format!(" phase {:?}rad", q.phase);
                }
            }
            PulseEvent::Wait(w) => out += &format!("wait {:?}s detuning {:?}rad/s", w.duration, w.detuning),
            PulseEvent::Readout { element } => out += &format!("readout {element}"),
        }
        out.push('\n');
    }
    out
}
