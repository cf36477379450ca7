//! TSPLIB / CVRPLIB `.vrp` reader and writer.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Instance, Point, Rounding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Header,
    Coords,
    Demands,
    Depots,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| parse_err(line, format!("cannot read {what} from `{tok}`")))
}

fn rounding_for(edge_weight_type: &str, line: usize) -> Result<Rounding> {
    match edge_weight_type {
        "EUC_2D" => Ok(Rounding::NearestInteger),
        "EXACT_2D" | "FLOAT_2D" => Ok(Rounding::None),
        other => Err(parse_err(line, format!("unsupported EDGE_WEIGHT_TYPE `{other}`"))),
    }
}

/// Parses a CVRP instance in TSPLIB format.
///
/// The node listed in `DEPOT_SECTION` becomes the depot; the remaining
/// `DIMENSION - 1` nodes become customers in ascending id order.
pub fn parse_vrp(text: &str) -> Result<Instance> {
    let mut name = String::new();
    let mut dimension: Option<(usize, usize)> = None;
    let mut capacity: Option<f64> = None;
    let mut rounding: Option<Rounding> = None;
    let mut coords: HashMap<usize, (Point, usize)> = HashMap::new();
    let mut demands: HashMap<usize, (f64, usize)> = HashMap::new();
    let mut depots: Vec<(usize, usize)> = Vec::new();
    let mut seen_coords = false;
    let mut seen_demands = false;
    let mut seen_depots = false;
    let mut depot_closed = false;
    let mut section = Section::Header;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let upper_head = trimmed
            .split(|c: char| c == ':' || c.is_whitespace())
            .next()
            .unwrap_or("")
            .to_ascii_uppercase();
        match upper_head.as_str() {
            "EOF" => break,
            "NODE_COORD_SECTION" => {
                section = Section::Coords;
                seen_coords = true;
                continue;
            }
            "DEMAND_SECTION" => {
                section = Section::Demands;
                seen_demands = true;
                continue;
            }
            "DEPOT_SECTION" => {
                section = Section::Depots;
                seen_depots = true;
                continue;
            }
            _ => {}
        }
        if let Some((key, value)) = trimmed.split_once(':') {
            let key = key.trim().to_ascii_uppercase();
            if key.chars().all(|c| c.is_ascii_uppercase() || c == '_') && !key.is_empty() {
                let value = value.trim();
                match key.as_str() {
                    "NAME" => name = value.to_string(),
                    "DIMENSION" => dimension = Some((parse_num(value, line, "DIMENSION")?, line)),
                    "CAPACITY" => capacity = Some(parse_num(value, line, "CAPACITY")?),
                    "EDGE_WEIGHT_TYPE" => rounding = Some(rounding_for(value, line)?),
                    "TYPE" if !value.to_ascii_uppercase().starts_with("CVRP") => {
                        return Err(parse_err(line, format!("unsupported TYPE `{value}`")));
                    }
                    _ => {}
                }
                section = Section::Header;
                continue;
            }
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        match section {
            Section::Header => {
                return Err(parse_err(line, format!("unexpected line `{trimmed}`")));
            }
            Section::Coords => {
                if toks.len() != 3 {
                    return Err(parse_err(line, "coordinate line needs `id x y`"));
                }
                let id: usize = parse_num(toks[0], line, "node id")?;
                let p = Point::new(parse_num(toks[1], line, "x")?, parse_num(toks[2], line, "y")?);
                if coords.insert(id, (p, line)).is_some() {
                    return Err(parse_err(line, format!("duplicate coordinate for node {id}")));
                }
            }
            Section::Demands => {
                if toks.len() != 2 {
                    return Err(parse_err(line, "demand line needs `id demand`"));
                }
                let id: usize = parse_num(toks[0], line, "node id")?;
                let q: f64 = parse_num(toks[1], line, "demand")?;
                if demands.insert(id, (q, line)).is_some() {
                    return Err(parse_err(line, format!("duplicate demand for node {id}")));
                }
            }
            Section::Depots => {
                for tok in toks {
                    let id: i64 = parse_num(tok, line, "depot id")?;
                    if id == -1 {
                        depot_closed = true;
                    } else if depot_closed {
                        return Err(parse_err(line, "depot entry after terminating -1"));
                    } else if id <= 0 {
                        return Err(parse_err(line, format!("invalid depot id {id}")));
                    } else {
                        depots.push((id as usize, line));
                    }
                }
            }
        }
    }

    let (dim, dim_line) = dimension.ok_or_else(|| parse_err(last_line, "missing DIMENSION"))?;
    let capacity = capacity.ok_or_else(|| parse_err(last_line, "missing CAPACITY"))?;
    let rounding = rounding.ok_or_else(|| parse_err(last_line, "missing EDGE_WEIGHT_TYPE"))?;
    for (seen, sec) in [
        (seen_coords, "NODE_COORD_SECTION"),
        (seen_demands, "DEMAND_SECTION"),
        (seen_depots, "DEPOT_SECTION"),
    ] {
        if !seen {
            return Err(parse_err(last_line, format!("missing {sec}")));
        }
    }
    if dim < 2 {
        return Err(parse_err(dim_line, "DIMENSION must count the depot and at least one customer"));
    }
    if coords.len() != dim {
        return Err(parse_err(
            dim_line,
            format!("DIMENSION {dim} but {} coordinates", coords.len()),
        ));
    }
    if demands.len() != dim {
        return Err(parse_err(
            dim_line,
            format!("DIMENSION {dim} but {} demands", demands.len()),
        ));
    }
    for (&id, &(_, line)) in coords.iter() {
        if id == 0 || id > dim {
            return Err(parse_err(line, format!("node id {id} outside 1..={dim}")));
        }
    }
    for (&id, &(_, line)) in demands.iter() {
        if id == 0 || id > dim {
            return Err(parse_err(line, format!("node id {id} outside 1..={dim}")));
        }
    }
    let (depot_id, depot_line) = match depots.as_slice() {
        [one] => *one,
        [] => return Err(parse_err(last_line, "DEPOT_SECTION lists no depot")),
        [_, (_, line), ..] => return Err(parse_err(*line, "multiple depots are not supported")),
    };
    if depot_id > dim {
        return Err(parse_err(depot_line, format!("depot id {depot_id} outside 1..={dim}")));
    }
    let (depot_demand, demand_line) = demands[&depot_id];
    if depot_demand != 0.0 {
        return Err(parse_err(
            demand_line,
            format!("depot demand must be 0, found {depot_demand}"),
        ));
    }

    let mut customers = Vec::with_capacity(dim - 1);
    let mut qs = Vec::with_capacity(dim - 1);
    for id in (1..=dim).filter(|&id| id != depot_id) {
        customers.push(coords[&id].0);
        let (q, line) = demands[&id];
        if !(q > 0.0 && q <= capacity) {
            return Err(parse_err(line, format!("demand {q} of node {id} outside (0, {capacity}]")));
        }
        qs.push(q);
    }
    Instance::new(name, coords[&depot_id].0, customers, qs, capacity, rounding)
        .map_err(|e| parse_err(last_line, e.to_string()))
}

/// Writes an instance in TSPLIB format with the depot as node 1.
///
/// Exact (unrounded) distances are declared as `EXACT_2D`.
pub fn write_vrp(instance: &Instance) -> String {
    let mut out = String::new();
    let ewt = match instance.rounding() {
        Rounding::NearestInteger => "EUC_2D",
        Rounding::None => "EXACT_2D",
    };
    let _ = writeln!(out, "NAME : {}", instance.name());
    let _ = writeln!(out, "TYPE : CVRP");
    let _ = writeln!(out, "DIMENSION : {}", instance.len() + 1);
    let _ = writeln!(out, "EDGE_WEIGHT_TYPE : {ewt}");
    let _ = writeln!(out, "CAPACITY : {}", instance.capacity());
    out.push_str("NODE_COORD_SECTION\n");
    let d = instance.depot();
    let _ = writeln!(out, "1 {} {}", d.x, d.y);
    for (i, p) in instance.customers().iter().enumerate() {
        let _ = writeln!(out, "{} {} {}", i + 2, p.x, p.y);
    }
    out.push_str("DEMAND_SECTION\n1 0\n");
    for (i, q) in instance.demands().iter().enumerate() {
        let _ = writeln!(out, "{} {}", i + 2, q);
    }
    out.push_str("DEPOT_SECTION\n1\n-1\nEOF\n");
    out
}
