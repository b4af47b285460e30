//! Text formats: the `gatelist` format, a single-register OpenQASM 2.0 subset,
//! and the routed-output variants of both.
//!
//! Routed output lists operations on physical nodes, one timestep per block,
//! blocks separated by a single blank line (an empty timestep is therefore an
//! empty block).

use std::fmt::Write as _;
use std::str::FromStr;

use crate::circuit::{Annotation, Circuit, CircuitError, GateOp};
use crate::routing::{OpKind, PlacedAnnotation, RoutedCircuit, RoutedLayer, RoutedOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircuitFormat {
    GateList,
    Qasm2,
}

impl CircuitFormat {
    /// QASM when the first meaningful line starts with `OPENQASM`.
    pub fn detect(text: &str) -> Self {
        let first = text
            .lines()
            .map(|l| l.split("//").next().unwrap_or("").trim())
            .find(|l| !l.is_empty() && !l.starts_with('#'));
        match first {
            Some(l) if l.starts_with("OPENQASM") => CircuitFormat::Qasm2,
            _ => CircuitFormat::GateList,
        }
    }
}

impl FromStr for CircuitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gatelist" => Ok(CircuitFormat::GateList),
            "qasm" | "qasm2" | "qasm2-subset" => Ok(CircuitFormat::Qasm2),
            other => Err(format!("unknown circuit format `{other}`")),
        }
    }
}

pub fn parse_circuit(text: &str, format: CircuitFormat) -> Result<Circuit, CircuitError> {
    match format {
        CircuitFormat::GateList => parse_gatelist(text),
        CircuitFormat::Qasm2 => parse_qasm(text),
    }
}

pub fn serialize_circuit(c: &Circuit, format: CircuitFormat) -> String {
    match format {
        CircuitFormat::GateList => {
            let mut out = format!("qubits {}\n", c.qubit_count());
            for g in c.gates() {
                let _ = writeln!(out, "cx {} {}", g.qubits.0, g.qubits.1);
            }
            out
        }
        CircuitFormat::Qasm2 => {
            let mut out = qasm_header(c.qubit_count());
            let mut seen = vec![0usize; c.qubit_count()];
            let mut pending: Vec<&Annotation> = c.annotations().iter().collect();
            let flush = |out: &mut String, seen: &[usize], pending: &mut Vec<&Annotation>| {
                pending.retain(|a| {
                    if a.position <= seen[a.qubit] {
                        let _ = writeln!(out, "{} q[{}];", a.text, a.qubit);
                        false
                    } else {
                        true
                    }
                });
            };
            for g in c.gates() {
                flush(&mut out, &seen, &mut pending);
                let _ = writeln!(out, "cx q[{}],q[{}];", g.qubits.0, g.qubits.1);
                seen[g.qubits.0] += 1;
                seen[g.qubits.1] += 1;
            }
            flush(&mut out, &seen, &mut pending);
            out
        }
    }
}

fn qasm_header(register: usize) -> String {
    format!("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[{register}];\n")
}

fn syntax(line: usize, msg: impl Into<String>) -> CircuitError {
    CircuitError::Syntax { line, msg: msg.into() }
}

fn parse_index(token: &str, line: usize) -> Result<usize, CircuitError> {
    token.parse().map_err(|_| syntax(line, format!("expected a qubit index, got `{token}`")))
}

fn check_pair(a: usize, b: usize, count: usize, line: usize) -> Result<(), CircuitError> {
    for index in [a, b] {
        if index >= count {
            return Err(CircuitError::QubitOutOfRange { line, index, count });
        }
    }
    if a == b {
        return Err(CircuitError::IdenticalOperands { line, qubit: a });
    }
    Ok(())
}

fn parse_gatelist(text: &str) -> Result<Circuit, CircuitError> {
    let mut qubits = None;
    let mut gates = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parts: Vec<&str> = content.split_whitespace().collect();
        match (qubits, parts.as_slice()) {
            (None, ["qubits", n]) => {
                let n = parse_index(n, line)?;
                if n == 0 {
                    return Err(syntax(line, "qubit count must be positive"));
                }
                qubits = Some(n);
            }
            (None, _) => return Err(syntax(line, "expected `qubits N` header")),
            (Some(count), ["cx", a, b]) => {
                let (a, b) = (parse_index(a, line)?, parse_index(b, line)?);
                check_pair(a, b, count, line)?;
                gates.push(GateOp { id: gates.len(), qubits: (a, b), duration: 1 });
            }
            (Some(_), _) => return Err(syntax(line, format!("expected `cx A B`, got `{content}`"))),
        }
    }
    let qubits = qubits.ok_or_else(|| syntax(1, "missing `qubits N` header"))?;
    Circuit::from_gates(qubits, gates, Vec::new())
}

/// Splits QASM source into `;`-terminated statements tagged with the line
/// each starts on. Comments are removed first.
fn qasm_statements(text: &str) -> Result<Vec<(usize, String)>, CircuitError> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (i, raw) in text.lines().enumerate() {
        let code = raw.split("//").next().unwrap_or("");
        for ch in code.chars() {
            if current.trim().is_empty() && !ch.is_whitespace() && ch != ';' {
                start = i + 1;
            }
            if ch == ';' {
                let stmt = current.trim().to_string();
                if stmt.is_empty() {
                    return Err(syntax(i + 1, "empty statement"));
                }
                out.push((start, stmt));
                current.clear();
            } else {
                current.push(ch);
            }
        }
        current.push(' ');
    }
    if !current.trim().is_empty() {
        return Err(syntax(start, format!("missing `;` after `{}`", current.trim())));
    }
    Ok(out)
}

/// `name[index]` operand.
fn qasm_operand(token: &str, register: &(String, usize), line: usize) -> Result<usize, CircuitError> {
    let token = token.trim();
    let Some(open) = token.find('[') else {
        if token == register.0 {
            return Err(CircuitError::Unsupported { line, construct: format!("register broadcast `{token}`") });
        }
        return Err(syntax(line, format!("expected `{}[i]`, got `{token}`", register.0)));
    };
    let name = token[..open].trim();
    if name != register.0 {
        return Err(syntax(line, format!("unknown register `{name}`")));
    }
    let inner = token[open + 1..]
        .strip_suffix(']')
        .ok_or_else(|| syntax(line, format!("unterminated index in `{token}`")))?;
    let index = parse_index(inner.trim(), line)?;
    if index >= register.1 {
        return Err(CircuitError::QubitOutOfRange { line, index, count: register.1 });
    }
    Ok(index)
}

const REJECTED: &[&str] = &["measure", "barrier", "reset", "if", "gate", "opaque"];

fn parse_qasm(text: &str) -> Result<Circuit, CircuitError> {
    let mut register: Option<(String, usize)> = None;
    let mut seen_header = false;
    let mut gates = Vec::new();
    let mut annotations = Vec::new();
    let mut gate_counts: Vec<usize> = Vec::new();

    for (line, stmt) in qasm_statements(text)? {
        let keyword = stmt.split(|c: char| c.is_whitespace() || c == '(').next().unwrap_or("");
        if !seen_header {
            if keyword != "OPENQASM" {
                return Err(syntax(line, "expected `OPENQASM 2.0;` header"));
            }
            let version = stmt["OPENQASM".len()..].trim();
            if version != "2.0" {
                return Err(CircuitError::Unsupported { line, construct: format!("OPENQASM {version}") });
            }
            seen_header = true;
            continue;
        }
        match keyword {
            "include" => {
                let file = stmt["include".len()..].trim();
                if file != "\"qelib1.inc\"" {
                    return Err(CircuitError::Unsupported { line, construct: format!("include {file}") });
                }
            }
            "qreg" | "creg" => {
                let decl = stmt[keyword.len()..].trim();
                let (name, size) = decl
                    .strip_suffix(']')
                    .and_then(|d| d.split_once('['))
                    .ok_or_else(|| syntax(line, format!("malformed declaration `{stmt}`")))?;
                let size: usize = size.trim().parse().map_err(|_| syntax(line, format!("bad size in `{stmt}`")))?;
                if keyword == "qreg" {
                    if register.is_some() {
                        return Err(CircuitError::Unsupported { line, construct: "multiple qreg".into() });
                    }
                    if size == 0 {
                        return Err(syntax(line, "register size must be positive"));
                    }
                    register = Some((name.trim().to_string(), size));
                    gate_counts = vec![0; size];
                }
                // classical registers carry no routing information
            }
            k if REJECTED.contains(&k) => {
                return Err(CircuitError::Unsupported { line, construct: k.to_string() });
            }
            _ => {
                let reg = register.as_ref().ok_or_else(|| syntax(line, "gate before `qreg` declaration"))?;
                let (head, args) = split_gate(&stmt, line)?;
                let operands = args
                    .split(',')
                    .map(|a| qasm_operand(a, reg, line))
                    .collect::<Result<Vec<_>, _>>()?;
                match *operands.as_slice() {
                    [a, b] if keyword == "cx" || keyword == "CX" => {
                        check_pair(a, b, reg.1, line)?;
                        gates.push(GateOp { id: gates.len(), qubits: (a, b), duration: 1 });
                        gate_counts[a] += 1;
                        gate_counts[b] += 1;
                    }
                    [q] => annotations.push(Annotation { qubit: q, position: gate_counts[q], text: head }),
                    _ => return Err(CircuitError::Unsupported { line, construct: format!("gate `{keyword}`") }),
                }
            }
        }
    }
    if !seen_header {
        return Err(syntax(1, "expected `OPENQASM 2.0;` header"));
    }
    let (_, size) = register.ok_or_else(|| syntax(1, "missing `qreg` declaration"))?;
    Circuit::from_gates(size, gates, annotations)
}

/// Splits `name(params) operands` into the gate text and operand list.
fn split_gate(stmt: &str, line: usize) -> Result<(String, &str), CircuitError> {
    let name_end = stmt.find(|c: char| c.is_whitespace() || c == '(').unwrap_or(stmt.len());
    let rest = &stmt[name_end..];
    let trimmed = rest.trim_start();
    if let Some(params) = trimmed.strip_prefix('(') {
        let close = params.find(')').ok_or_else(|| syntax(line, "unterminated parameter list"))?;
        let text = format!("{}({})", &stmt[..name_end], params[..close].trim());
        let args = params[close + 1..].trim();
        if args.is_empty() {
            return Err(syntax(line, format!("gate `{}` has no operands", &stmt[..name_end])));
        }
        Ok((text, args))
    } else {
        if trimmed.is_empty() {
            return Err(syntax(line, format!("gate `{stmt}` has no operands")));
        }
        Ok((stmt[..name_end].to_string(), trimmed))
    }
}

/// Routed output in the same format family as the input.
pub fn serialize_routed(r: &RoutedCircuit, format: CircuitFormat) -> String {
    let mut lines: Vec<String> = Vec::new();
    let op_line = |op: &RoutedOp| {
        let name = match op.kind {
            OpKind::Cx => "cx",
            OpKind::Swap => "swap",
        };
        match format {
            CircuitFormat::GateList => format!("{name} {} {}", op.nodes.0, op.nodes.1),
            CircuitFormat::Qasm2 => format!("{name} q[{}],q[{}];", op.nodes.0, op.nodes.1),
        }
    };
    let ann_line = |a: &PlacedAnnotation| format!("{} q[{}];", a.text, a.node);
    match format {
        CircuitFormat::GateList => lines.push(format!("qubits {}", r.node_count)),
        CircuitFormat::Qasm2 => lines.extend(qasm_header(r.node_count).lines().map(str::to_string)),
    }
    let mut leading: Vec<String> = r.leading.iter().map(ann_line).collect();
    for (t, layer) in r.layers.iter().enumerate() {
        if t > 0 {
            lines.push(String::new());
        }
        lines.append(&mut leading);
        lines.extend(layer.ops.iter().map(op_line));
        if format == CircuitFormat::Qasm2 {
            lines.extend(layer.annotations.iter().map(ann_line));
        }
    }
    lines.append(&mut leading);
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// Parses routed output. Durations are not part of the text: SWAPs get
/// `swap_duration` and gates one timestep. Single-qubit lines are skipped.
pub fn parse_routed(text: &str, swap_duration: u32) -> Result<RoutedCircuit, CircuitError> {
    let format = CircuitFormat::detect(text);
    let mut lines = text.lines().enumerate().peekable();
    let node_count = match format {
        CircuitFormat::GateList => {
            let (i, first) = lines.next().ok_or_else(|| syntax(1, "empty routed circuit"))?;
            match first.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["qubits", n] => parse_index(n, i + 1)?,
                _ => return Err(syntax(i + 1, "expected `qubits N` header")),
            }
        }
        CircuitFormat::Qasm2 => {
            let mut size = None;
            for (i, l) in lines.by_ref() {
                let l = l.trim();
                if let Some(decl) = l.strip_prefix("qreg") {
                    let inner = decl.trim().trim_end_matches(';').trim_end_matches(']');
                    let n = inner.split_once('[').map(|(_, n)| n).unwrap_or("");
                    size = Some(parse_index(n.trim(), i + 1)?);
                    break;
                }
            }
            size.ok_or_else(|| syntax(1, "missing `qreg` declaration"))?
        }
    };

    let mut layers: Vec<RoutedLayer> = Vec::new();
    let mut current = RoutedLayer::default();
    let mut any_body = false;
    for (i, raw) in lines {
        let line = i + 1;
        let content = raw.split("//").next().unwrap_or("").trim();
        if content.is_empty() {
            layers.push(std::mem::take(&mut current));
            any_body = true;
            continue;
        }
        any_body = true;
        let content = content.trim_end_matches(';');
        let (name, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        let kind = match name {
            "cx" | "CX" => OpKind::Cx,
            "swap" => OpKind::Swap,
            _ if format == CircuitFormat::Qasm2 => continue,
            _ => return Err(syntax(line, format!("unexpected `{content}`"))),
        };
        let operands: Vec<usize> = match format {
            CircuitFormat::GateList => {
                rest.split_whitespace().map(|t| parse_index(t, line)).collect::<Result<_, _>>()?
            }
            CircuitFormat::Qasm2 => rest
                .split(',')
                .map(|t| {
                    let t = t.trim();
                    let inner = t.split_once('[').map(|(_, r)| r.trim_end_matches(']')).unwrap_or(t);
                    parse_index(inner.trim(), line)
                })
                .collect::<Result<_, _>>()?,
        };
        let [a, b] = operands[..] else {
            return Err(syntax(line, format!("expected two operands in `{content}`")));
        };
        check_pair(a, b, node_count, line)?;
        let duration = if kind == OpKind::Swap { swap_duration } else { 1 };
        current.ops.push(RoutedOp { kind, nodes: (a, b), duration });
    }
    if any_body {
        layers.push(current);
    }
    Ok(RoutedCircuit { node_count, leading: Vec::new(), layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gatelist_basic() {
        let c = parse_circuit("qubits 4\ncx 0 1\ncx 2 3", CircuitFormat::GateList).unwrap();
        assert_eq!(c.qubit_count(), 4);
        assert_eq!(c.pairs(), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn gatelist_errors_carry_line_numbers() {
        let e = parse_circuit("qubits 2\ncx 0 0", CircuitFormat::GateList).unwrap_err();
        assert!(e.to_string().contains("identical qubit operands"), "{e}");
        assert!(e.to_string().contains("line 2"));
        let e = parse_circuit("qubits 2\ncx 0 5", CircuitFormat::GateList).unwrap_err();
        assert!(matches!(e, CircuitError::QubitOutOfRange { line: 2, index: 5, count: 2 }));
        let e = parse_circuit("qubits 2\n\nfoo 0 1", CircuitFormat::GateList).unwrap_err();
        assert!(matches!(e, CircuitError::Syntax { line: 3, .. }));
        assert!(parse_circuit("cx 0 1", CircuitFormat::GateList).is_err());
    }

    #[test]
    fn qasm_with_single_qubit_passthrough() {
        let src = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[3];\ncx q[0],q[2];\nh q[1];\ncx q[0],q[2];\n";
        let c = parse_circuit(src, CircuitFormat::Qasm2).unwrap();
        assert_eq!(c.pairs(), vec![(0, 2), (0, 2)]);
        assert_eq!(c.annotations(), &[Annotation { qubit: 1, position: 0, text: "h".into() }]);
        assert_eq!(c.depth(), 2);
    }

    #[test]
    fn qasm_parameters_and_statements_across_lines() {
        let src = "OPENQASM 2.0; qreg r[2];\nu3(0.1, 0.2,\n pi/2) r[1]; cx r[1],\n r[0]; // tail\n";
        let c = parse_circuit(src, CircuitFormat::Qasm2).unwrap();
        assert_eq!(c.pairs(), vec![(1, 0)]);
        assert_eq!(c.annotations()[0].text, "u3(0.1, 0.2,  pi/2)");
    }

    #[test]
    fn qasm_rejections() {
        let base = "OPENQASM 2.0;\nqreg q[2];\n";
        for (extra, needle) in [
            ("measure q[0] -> c[0];", "measure"),
            ("barrier q;", "barrier"),
            ("cz q[0],q[1];", "cz"),
            ("h q;", "broadcast"),
            ("qreg r[2];", "multiple qreg"),
        ] {
            let e = parse_circuit(&format!("{base}{extra}\n"), CircuitFormat::Qasm2).unwrap_err();
            assert!(matches!(e, CircuitError::Unsupported { line: 3, .. }), "{extra}: {e}");
            assert!(e.to_string().contains(needle), "{e}");
        }
        let e = parse_circuit("OPENQASM 2.0;\nqreg q[2];\ncx q[0],q[0];\n", CircuitFormat::Qasm2).unwrap_err();
        assert!(matches!(e, CircuitError::IdenticalOperands { line: 3, .. }));
        assert!(parse_circuit("qreg q[2];", CircuitFormat::Qasm2).is_err());
        assert!(parse_circuit("OPENQASM 2.0;\nqreg q[2];\ncx q[0],q[1]", CircuitFormat::Qasm2).is_err());
    }

    #[test]
    fn creg_is_accepted() {
        let c = parse_circuit("OPENQASM 2.0;\nqreg q[2];\ncreg c[2];\ncx q[0],q[1];\n", CircuitFormat::Qasm2).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn detect_format() {
        assert_eq!(CircuitFormat::detect("// hi\nOPENQASM 2.0;"), CircuitFormat::Qasm2);
        assert_eq!(CircuitFormat::detect("qubits 3\n"), CircuitFormat::GateList);
    }

    #[test]
    fn routed_gatelist_layers_round_trip() {
        let r = RoutedCircuit::new(
            4,
            vec![
                vec![RoutedOp { kind: OpKind::Swap, nodes: (0, 1), duration: 1 }],
                vec![],
                vec![
                    RoutedOp { kind: OpKind::Cx, nodes: (1, 2), duration: 1 },
                    RoutedOp { kind: OpKind::Swap, nodes: (3, 0), duration: 1 },
                ],
            ],
        );
        let text = serialize_routed(&r, CircuitFormat::GateList);
        assert_eq!(text, "qubits 4\nswap 0 1\n\n\ncx 1 2\nswap 3 0\n");
        assert_eq!(parse_routed(&text, 1).unwrap(), r);
    }

    #[test]
    fn routed_qasm_round_trip_ignores_annotations() {
        let mut r = RoutedCircuit::new(3, vec![vec![RoutedOp { kind: OpKind::Cx, nodes: (0, 1), duration: 1 }]]);
        r.layers[0].annotations.push(PlacedAnnotation { node: 2, text: "h".into() });
        let text = serialize_routed(&r, CircuitFormat::Qasm2);
        assert!(text.contains("cx q[0],q[1];\nh q[2];"));
        let back = parse_routed(&text, 1).unwrap();
        assert_eq!(back.layers[0].ops, r.layers[0].ops);
    }
}
