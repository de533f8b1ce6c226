use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_nonnegative, read_to_string, FuelType, ModelError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub bus: String,
    pub fuel: FuelType,
    pub capacity_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_override: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_mw: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile<B, G, L> {
    #[serde(default)]
    buses: B,
    #[serde(default)]
    generators: G,
    #[serde(default)]
    lines: L,
}

/// Static grid description: buses, generators and lines.
///
/// Invariants are established by [`Network::new`]: unique ids per kind,
/// every reference resolves, no self-loops and at most one line per
/// unordered bus pair.
#[derive(Clone, Debug)]
pub struct Network {
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    lines: Vec<Line>,
    bus_index: HashMap<String, usize>,
    gen_index: HashMap<String, usize>,
    line_index: HashMap<String, usize>,
    gen_bus: Vec<usize>,
    line_ends: Vec<(usize, usize)>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.buses == other.buses && self.generators == other.generators && self.lines == other.lines
    }
}

impl Network {
    pub fn new(buses: Vec<Bus>, generators: Vec<Generator>, lines: Vec<Line>) -> Result<Self, ModelError> {
        let bus_index = index_unique("bus", buses.iter().map(|b| b.id.as_str()))?;
        let gen_index = index_unique("generator", generators.iter().map(|g| g.id.as_str()))?;
        let line_index = index_unique("line", lines.iter().map(|l| l.id.as_str()))?;

        let lookup = |id: &str, context: String| {
            bus_index.get(id).copied().ok_or_else(|| ModelError::UnknownReference {
                kind: "bus",
                id: id.to_string(),
                context,
            })
        };

        let mut gen_bus = Vec::with_capacity(generators.len());
        for g in &generators {
            gen_bus.push(lookup(&g.bus, format!("generator \"{}\"", g.id))?);
            check_nonnegative("capacity_mw", &g.id, g.capacity_mw)?;
            if let Some(r) = g.rate_override {
                check_nonnegative("rate_override", &g.id, r)?;
            }
        }

        let mut line_ends = Vec::with_capacity(lines.len());
        let mut pairs: HashMap<(usize, usize), usize> = HashMap::with_capacity(lines.len());
        for (k, l) in lines.iter().enumerate() {
            let a = lookup(&l.from, format!("line \"{}\"", l.id))?;
            let b = lookup(&l.to, format!("line \"{}\"", l.id))?;
            if a == b {
                return Err(ModelError::SelfLoop {
                    line: l.id.clone(),
                    bus: l.from.clone(),
                });
            }
            if let Some(&first) = pairs.get(&(a.min(b), a.max(b))) {
                return Err(ModelError::ParallelLine {
                    first: lines[first].id.clone(),
                    second: l.id.clone(),
                    a: l.from.clone(),
                    b: l.to.clone(),
                });
            }
            pairs.insert((a.min(b), a.max(b)), k);
            for (field, v) in [("x_pu", l.x_pu), ("limit_mw", l.limit_mw)] {
                if let Some(v) = v {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(ModelError::InvalidValue {
                            field,
                            id: l.id.clone(),
                            value: v,
                        });
                    }
                }
            }
            line_ends.push((a, b));
        }

        Ok(Self {
            buses,
            generators,
            lines,
            bus_index,
            gen_index,
            line_index,
            gen_bus,
            line_ends,
        })
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self, ModelError> {
        let file: NetworkFile<Vec<Bus>, Vec<Generator>, Vec<Line>> =
            serde_json::from_str(text).map_err(|e| ModelError::json(origin, e))?;
        Self::new(file.buses, file.generators, file.lines)
    }

    /// Canonical JSON: fields and records in stored order.
    pub fn to_json_string(&self) -> String {
        let file = NetworkFile {
            buses: &self.buses,
            generators: &self.generators,
            lines: &self.lines,
        };
        serde_json::to_string_pretty(&file).expect("network serialises")
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn bus_idx(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    pub fn gen_idx(&self, id: &str) -> Option<usize> {
        self.gen_index.get(id).copied()
    }

    pub fn line_idx(&self, id: &str) -> Option<usize> {
        self.line_index.get(id).copied()
    }

    /// Bus index of generator `g`.
    pub fn gen_bus(&self, g: usize) -> usize {
        self.gen_bus[g]
    }

    /// `(from, to)` bus indices of line `l`.
    pub fn line_ends(&self, l: usize) -> (usize, usize) {
        self.line_ends[l]
    }
}

fn index_unique<'a>(
    kind: &'static str,
    ids: impl ExactSizeIterator<Item = &'a str>,
) -> Result<HashMap<String, usize>, ModelError> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.enumerate() {
        if index.insert(id.to_string(), i).is_some() {
            return Err(ModelError::DuplicateId {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(index)
}

/// Reads and validates a `network.json` file.
pub fn parse_network(path: impl AsRef<Path>) -> Result<Network, ModelError> {
    let path = path.as_ref();
    Network::from_json_str(&read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Network, ModelError> {
        Network::from_json_str(text, Path::new("test.json"))
    }

    const THREE_BUS: &str = r#"{
        "buses": [{"id": "b1", "region": "north", "population": 10}, {"id": "b2"}, {"id": "b3"}],
        "generators": [
            {"id": "g1", "bus": "b1", "fuel": "coal", "capacity_mw": 100},
            {"id": "g2", "bus": "b2", "fuel": "Solar", "capacity_mw": 80, "rate_override": 0.01}
        ],
        "lines": [
            {"id": "l13", "from": "b1", "to": "b3", "x_pu": 0.1},
            {"id": "l23", "from": "b2", "to": "b3", "limit_mw": 50}
        ]
    }"#;

    #[test]
    fn parses_three_bus() {
        let net = parse(THREE_BUS).unwrap();
        assert_eq!(net.buses().len(), 3);
        assert_eq!(net.lines().len(), 2);
        assert_eq!(net.generators().len(), 2);
        assert_eq!(net.generators()[1].fuel, FuelType::Solar);
        assert_eq!(net.line_ends(1), (1, 2));
        assert_eq!(net.gen_bus(0), 0);
        assert_eq!(net.buses()[0].population, Some(10));
    }

    #[test]
    fn duplicate_bus_is_named() {
        let err = parse(r#"{"buses": [{"id": "b1"}, {"id": "b1"}]}"#).unwrap_err();
        assert!(err.to_string().contains("\"b1\""), "{err}");
        assert!(matches!(err, ModelError::DuplicateId { kind: "bus", .. }));
    }

    #[test]
    fn self_loop_rejected() {
        let err = parse(r#"{"buses": [{"id": "b1"}], "lines": [{"id": "l", "from": "b1", "to": "b1"}]}"#)
            .unwrap_err();
        assert!(matches!(err, ModelError::SelfLoop { .. }));
    }

    #[test]
    fn parallel_line_rejected() {
        let err = parse(
            r#"{"buses": [{"id": "a"}, {"id": "b"}],
                "lines": [{"id": "l1", "from": "a", "to": "b"}, {"id": "l2", "from": "b", "to": "a"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ParallelLine { .. }));
    }

    #[test]
    fn unknown_generator_bus() {
        let err = parse(
            r#"{"buses": [{"id": "a"}], "generators": [{"id": "g", "bus": "zz", "fuel": "coal", "capacity_mw": 1}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::UnknownReference { ref id, .. } if id == "zz"));
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse("{\n  \"buses\": [\n    {\"id\": 3}\n  ]\n}").unwrap_err();
        match err {
            ModelError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_reactance() {
        let err = parse(r#"{"buses": [{"id": "a"}, {"id": "b"}], "lines": [{"id": "l", "from": "a", "to": "b", "x_pu": 0}]}"#)
            .unwrap_err();
        assert!(matches!(err, ModelError::InvalidValue { field: "x_pu", .. }));
    }

    #[test]
    fn canonical_round_trip() {
        let net = parse(THREE_BUS).unwrap();
        let again = parse(&net.to_json_string()).unwrap();
        assert_eq!(net, again);
        assert_eq!(net.to_json_string(), again.to_json_string());
    }
}
