//! Line-oriented parser for the MATPOWER case format subset: the
//! `mpc.baseMVA` assignment and the bracketed numeric `mpc.bus`,
//! `mpc.gen`, `mpc.branch` matrices, with `%` comments and semicolon row
//! terminators. Unknown assignments are ignored; every error cites its
//! 1-based line number.

use std::collections::HashMap;

use super::MatpowerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

/// One row of the bus table (columns we consume; the rest are ignored).
#[derive(Debug, Clone)]
pub struct Bus {
    pub id: i64,
    pub bus_type: BusType,
    /// Active / reactive demand in MW / MVAr.
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance / susceptance in MW / MVAr at V = 1 pu.
    pub gs: f64,
    pub bs: f64,
    /// Voltage magnitude setpoint (pu) and angle (degrees).
    pub vm: f64,
    pub va_deg: f64,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct Gen {
    pub bus: i64,
    /// Active / reactive output in MW / MVAr.
    pub pg: f64,
    pub qg: f64,
    /// Voltage magnitude setpoint (pu).
    pub vg: f64,
    pub in_service: bool,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub from: i64,
    pub to: i64,
    /// Series impedance (pu) and total line-charging susceptance (pu).
    pub r: f64,
    pub x: f64,
    pub charging: f64,
    /// Off-nominal tap ratio (0 means nominal) and phase shift (degrees).
    pub tap: f64,
    pub shift_deg: f64,
    pub in_service: bool,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct MatpowerCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub gens: Vec<Gen>,
    pub branches: Vec<Branch>,
}

impl MatpowerCase {
    /// Map from bus id to its position in the bus table.
    pub fn bus_positions(&self) -> HashMap<i64, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Position of the unique slack bus in the bus table.
    pub fn slack_position(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.bus_type == BusType::Slack)
            .expect("parse_case guarantees exactly one slack bus")
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|br| br.in_service)
    }
}

/// A raw numeric table plus the line each row came from.
struct RawTable {
    open_line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 13;

pub fn parse_case(text: &str) -> Result<MatpowerCase, MatpowerError> {
    let mut base_mva: Option<f64> = None;
    let mut tables: HashMap<&'static str, RawTable> = HashMap::new();
    let mut current: Option<&'static str> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(table) = current {
            let closes = line.contains(']');
            let content = line.split(']').next().unwrap_or("");
            parse_rows(table, content, line_no, tables.get_mut(table).unwrap())?;
            if closes {
                current = None;
            }
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else { continue };
        if let Some(value) = rest.strip_prefix("baseMVA") {
            let value = value.trim_start_matches(['=', ' ', '\t']).trim_end_matches(';').trim();
            base_mva = Some(value.parse().map_err(|_| MatpowerError::MalformedRow {
                table: "baseMVA",
                line: line_no,
                message: format!("unparseable number {value:?}"),
            })?);
            continue;
        }
        for table in ["bus", "gen", "branch"] {
            let Some(tail) = rest.strip_prefix(table) else { continue };
            let Some(bracket) = tail.find('[') else { continue };
            let entry =
                tables.entry(table).or_insert(RawTable { open_line: line_no, rows: Vec::new() });
            entry.open_line = line_no;
            let after = &tail[bracket + 1..];
            let closes = after.contains(']');
            let content = after.split(']').next().unwrap_or("");
            parse_rows(table, content, line_no, entry)?;
            if !closes {
                current = Some(table);
            }
            break;
        }
    }

    let base_mva = base_mva.ok_or(MatpowerError::MissingBaseMva)?;
    let mut take = |name: &'static str, min_cols: usize| -> Result<RawTable, MatpowerError> {
        let table = tables.remove(name).ok_or(MatpowerError::MissingTable(name))?;
        if table.rows.is_empty() {
            return Err(MatpowerError::EmptyTable { table: name, line: table.open_line });
        }
        for (line, row) in &table.rows {
            if row.len() < min_cols {
                return Err(MatpowerError::MalformedRow {
                    table: name,
                    line: *line,
                    message: format!("expected at least {min_cols} columns, got {}", row.len()),
                });
            }
        }
        Ok(table)
    };
    let bus_raw = take("bus", BUS_COLS)?;
    let gen_raw = take("gen", GEN_COLS)?;
    let branch_raw = take("branch", BRANCH_COLS)?;

    let mut buses = Vec::with_capacity(bus_raw.rows.len());
    let mut seen = HashMap::new();
    for (line, row) in &bus_raw.rows {
        let id = row[0] as i64;
        if seen.insert(id, *line).is_some() {
            return Err(MatpowerError::DuplicateBusId { id, line: *line });
        }
        let bus_type = match row[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            _ => return Err(MatpowerError::BadBusType { value: row[1], line: *line }),
        };
        buses.push(Bus {
            id,
            bus_type,
            pd: row[2],
            qd: row[3],
            gs: row[4],
            bs: row[5],
            vm: row[7],
            va_deg: row[8],
            line: *line,
        });
    }
    let slack_count = buses.iter().filter(|b| b.bus_type == BusType::Slack).count();
    if slack_count != 1 {
        return Err(MatpowerError::SlackCount(slack_count));
    }

    let known = |id: i64, line: usize| -> Result<i64, MatpowerError> {
        if seen.contains_key(&id) {
            Ok(id)
        } else {
            Err(MatpowerError::UnknownBus { id, line })
        }
    };
    let mut gens = Vec::with_capacity(gen_raw.rows.len());
    for (line, row) in &gen_raw.rows {
        gens.push(Gen {
            bus: known(row[0] as i64, *line)?,
            pg: row[1],
            qg: row[2],
            vg: row[5],
            in_service: row[7] > 0.0,
            line: *line,
        });
    }
    let mut branches = Vec::with_capacity(branch_raw.rows.len());
    for (line, row) in &branch_raw.rows {
        branches.push(Branch {
            from: known(row[0] as i64, *line)?,
            to: known(row[1] as i64, *line)?,
            r: row[2],
            x: row[3],
            charging: row[4],
            tap: row[8],
            shift_deg: row[9],
            in_service: row[10] != 0.0,
            line: *line,
        });
    }

    Ok(MatpowerCase { base_mva, buses, gens, branches })
}

/// Parse semicolon-separated numeric rows out of one line of matrix body.
fn parse_rows(
    table: &'static str,
    content: &str,
    line_no: usize,
    into: &mut RawTable,
) -> Result<(), MatpowerError> {
    for chunk in content.split(';') {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for token in chunk.split_whitespace() {
            let value = token.parse::<f64>().map_err(|_| MatpowerError::MalformedRow {
                table,
                line: line_no,
                message: format!("unparseable number {token:?}"),
            })?;
            row.push(value);
        }
        into.rows.push((line_no, row));
    }
    Ok(())
}
