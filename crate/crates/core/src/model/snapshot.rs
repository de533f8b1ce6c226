use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_nonnegative, read_to_string, FuelType, ModelError, Network, Tolerance};

/// Active power on one line, signed positive in the `from → to` direction.
///
/// `received_mw` is the optional receiving-end measurement; only its
/// magnitude is used, so both the "same sign" and the "injection into the
/// line" conventions are accepted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFlow {
    pub mw: f64,
    pub received_mw: Option<f64>,
}

impl LineFlow {
    pub fn single(mw: f64) -> Self {
        Self { mw, received_mw: None }
    }

    pub fn dual(sent: f64, received: f64) -> Self {
        Self {
            mw: sent,
            received_mw: Some(received),
        }
    }

    /// Magnitude arriving at the receiving bus.
    pub fn delivered(&self) -> f64 {
        self.received_mw.map_or(self.mw.abs(), f64::abs)
    }
}

/// A virtual source created from a negative load.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtraSource {
    pub id: String,
    pub bus: usize,
    pub fuel: FuelType,
    pub mw: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub enum NegativeLoadPolicy {
    #[default]
    Reject,
    /// Replace the negative load with a source of that size at the bus.
    ConvertToSource(FuelType),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SnapshotOptions {
    pub negative_loads: NegativeLoadPolicy,
}

/// One timestamp's solved state, stored densely in the companion
/// [`Network`]'s bus, generator and line order.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    timestamp: String,
    loads: Vec<f64>,
    dispatch: Vec<f64>,
    flows: Vec<LineFlow>,
    loss_demand: Vec<f64>,
    extra_sources: Vec<ExtraSource>,
}

#[derive(Deserialize)]
struct SnapshotFile {
    #[serde(default)]
    timestamp: String,
    #[serde(default)]
    loads: BTreeMap<String, f64>,
    #[serde(default)]
    dispatch: BTreeMap<String, f64>,
    #[serde(default)]
    flows: BTreeMap<String, FlowValue>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FlowValue {
    Single(f64),
    Pair([f64; 2]),
}

#[derive(Serialize)]
struct SnapshotOut<'a> {
    timestamp: &'a str,
    loads: BTreeMap<&'a str, f64>,
    dispatch: BTreeMap<&'a str, f64>,
    flows: BTreeMap<&'a str, FlowValue>,
}

impl Snapshot {
    /// Builds a snapshot from dense vectors aligned with `net`.
    pub fn new(
        net: &Network,
        timestamp: impl Into<String>,
        loads: Vec<f64>,
        dispatch: Vec<f64>,
        flows: Vec<LineFlow>,
    ) -> Result<Self, ModelError> {
        let dims = [
            ("loads", loads.len(), net.buses().len()),
            ("dispatch", dispatch.len(), net.generators().len()),
            ("flows", flows.len(), net.lines().len()),
        ];
        for (field, got, want) in dims {
            if got != want {
                return Err(ModelError::InvalidValue {
                    field: "vector length",
                    id: field.to_string(),
                    value: got as f64 - want as f64,
                });
            }
        }
        for (b, &p) in net.buses().iter().zip(&loads) {
            if p < 0.0 {
                return Err(ModelError::NegativeLoad { bus: b.id.clone(), mw: p });
            }
            check_nonnegative("load", &b.id, p)?;
        }
        for (g, &p) in net.generators().iter().zip(&dispatch) {
            check_nonnegative("dispatch", &g.id, p)?;
        }
        for (l, f) in net.lines().iter().zip(&flows) {
            if !f.mw.is_finite() || f.received_mw.is_some_and(|r| !r.is_finite()) {
                return Err(ModelError::InvalidValue {
                    field: "flow",
                    id: l.id.clone(),
                    value: f.mw,
                });
            }
        }
        Ok(Self {
            timestamp: timestamp.into(),
            loss_demand: vec![0.0; loads.len()],
            loads,
            dispatch,
            flows,
            extra_sources: Vec::new(),
        })
    }

    pub fn timestamp(&self) -> &str {
        &self.timestamp
    }

    /// Declared load per bus (MW).
    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    /// Generator output per generator (MW).
    pub fn dispatch(&self) -> &[f64] {
        &self.dispatch
    }

    pub fn flows(&self) -> &[LineFlow] {
        &self.flows
    }

    /// Line losses charged to receiving buses by [`reconcile_dual_end_flows`].
    pub fn loss_demand(&self) -> &[f64] {
        &self.loss_demand
    }

    pub fn extra_sources(&self) -> &[ExtraSource] {
        &self.extra_sources
    }

    pub fn set_load(&mut self, bus: usize, mw: f64) -> Result<(), ModelError> {
        check_nonnegative("load", &bus.to_string(), mw)?;
        self.loads[bus] = mw;
        Ok(())
    }

    pub fn set_timestamp(&mut self, timestamp: impl Into<String>) {
        self.timestamp = timestamp.into();
    }

    /// Σ dispatch plus negative-load sources.
    pub fn total_generation(&self) -> f64 {
        self.dispatch.iter().sum::<f64>() + self.extra_sources.iter().map(|s| s.mw).sum::<f64>()
    }

    /// Σ declared load plus charged line losses.
    pub fn total_load(&self) -> f64 {
        self.loads.iter().sum::<f64>() + self.loss_demand.iter().sum::<f64>()
    }

    pub fn has_dual_end_flows(&self) -> bool {
        self.flows.iter().any(|f| f.received_mw.is_some())
    }

    pub fn from_json_str(
        text: &str,
        net: &Network,
        opts: &SnapshotOptions,
        origin: &Path,
    ) -> Result<Self, ModelError> {
        let file: SnapshotFile = serde_json::from_str(text).map_err(|e| ModelError::json(origin, e))?;
        let mut b = SnapshotAssembler::new(net, opts);
        b.timestamp = file.timestamp;
        for (id, mw) in file.loads {
            b.load(&id, mw)?;
        }
        for (id, mw) in file.dispatch {
            b.dispatch(&id, mw)?;
        }
        for (id, v) in file.flows {
            let flow = match v {
                FlowValue::Single(mw) => LineFlow::single(mw),
                FlowValue::Pair([s, r]) => LineFlow::dual(s, r),
            };
            b.flow(&id, flow)?;
        }
        Ok(b.finish())
    }

    /// Reads `kind,id,mw[,mw_recv]` rows where kind is `load`, `dispatch`,
    /// `flow` or `timestamp` (the timestamp value goes in the id column).
    pub fn from_csv_reader(
        reader: impl Read,
        net: &Network,
        opts: &SnapshotOptions,
        origin: &Path,
    ) -> Result<Self, ModelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut b = SnapshotAssembler::new(net, opts);
        for (i, record) in rdr.records().enumerate() {
            let err = |line: usize, message: String| ModelError::Parse {
                path: origin.display().to_string(),
                line,
                column: 0,
                message,
            };
            let record = record.map_err(|e| err(i + 1, e.to_string()))?;
            let line = record.position().map_or(i + 1, |p| p.line() as usize);
            let field = |k: usize| record.get(k).unwrap_or("");
            let number = |k: usize| {
                field(k)
                    .parse::<f64>()
                    .map_err(|e| err(line, format!("column {}: {e}", k + 1)))
            };
            match field(0) {
                "kind" if i == 0 => continue,
                "timestamp" => b.timestamp = field(1).to_string(),
                "load" => b.load(field(1), number(2)?)?,
                "dispatch" => b.dispatch(field(1), number(2)?)?,
                "flow" => {
                    let flow = if field(3).is_empty() {
                        LineFlow::single(number(2)?)
                    } else {
                        LineFlow::dual(number(2)?, number(3)?)
                    };
                    b.flow(field(1), flow)?;
                }
                other => return Err(err(line, format!("unknown row kind \"{other}\""))),
            }
        }
        Ok(b.finish())
    }

    /// Canonical `snapshot.json` text (entries sorted by id).
    pub fn to_json_string(&self, net: &Network) -> String {
        let mut loads: BTreeMap<&str, f64> = net
            .buses()
            .iter()
            .zip(&self.loads)
            .map(|(b, &p)| (b.id.as_str(), p))
            .collect();
        for s in &self.extra_sources {
            *loads.get_mut(net.buses()[s.bus].id.as_str()).unwrap() -= s.mw;
        }
        let out = SnapshotOut {
            timestamp: &self.timestamp,
            loads,
            dispatch: net
                .generators()
                .iter()
                .zip(&self.dispatch)
                .map(|(g, &p)| (g.id.as_str(), p))
                .collect(),
            flows: net
                .lines()
                .iter()
                .zip(&self.flows)
                .map(|(l, f)| {
                    let v = match f.received_mw {
                        None => FlowValue::Single(f.mw),
                        Some(r) => FlowValue::Pair([f.mw, r]),
                    };
                    (l.id.as_str(), v)
                })
                .collect(),
        };
        serde_json::to_string_pretty(&out).expect("snapshot serialises")
    }
}

struct SnapshotAssembler<'a> {
    net: &'a Network,
    opts: &'a SnapshotOptions,
    timestamp: String,
    loads: Vec<f64>,
    dispatch: Vec<f64>,
    flows: Vec<LineFlow>,
    extra: Vec<ExtraSource>,
}

impl<'a> SnapshotAssembler<'a> {
    fn new(net: &'a Network, opts: &'a SnapshotOptions) -> Self {
        Self {
            net,
            opts,
            timestamp: String::new(),
            loads: vec![0.0; net.buses().len()],
            dispatch: vec![0.0; net.generators().len()],
            flows: vec![LineFlow::single(0.0); net.lines().len()],
            extra: Vec::new(),
        }
    }

    fn unknown(kind: &'static str, id: &str) -> ModelError {
        ModelError::UnknownReference {
            kind,
            id: id.to_string(),
            context: "snapshot".into(),
        }
    }

    fn load(&mut self, id: &str, mw: f64) -> Result<(), ModelError> {
        let b = self.net.bus_idx(id).ok_or_else(|| Self::unknown("bus", id))?;
        if mw < 0.0 {
            match &self.opts.negative_loads {
                NegativeLoadPolicy::Reject => {
                    return Err(ModelError::NegativeLoad { bus: id.to_string(), mw })
                }
                NegativeLoadPolicy::ConvertToSource(fuel) => {
                    self.extra.push(ExtraSource {
                        id: format!("{id}:negative-load"),
                        bus: b,
                        fuel: fuel.clone(),
                        mw: -mw,
                    });
                    self.loads[b] = 0.0;
                    return Ok(());
                }
            }
        }
        check_nonnegative("load", id, mw)?;
        self.loads[b] = mw;
        Ok(())
    }

    fn dispatch(&mut self, id: &str, mw: f64) -> Result<(), ModelError> {
        let g = self.net.gen_idx(id).ok_or_else(|| Self::unknown("generator", id))?;
        check_nonnegative("dispatch", id, mw)?;
        self.dispatch[g] = mw;
        Ok(())
    }

    fn flow(&mut self, id: &str, flow: LineFlow) -> Result<(), ModelError> {
        let l = self.net.line_idx(id).ok_or_else(|| Self::unknown("line", id))?;
        self.flows[l] = flow;
        Ok(())
    }

    fn finish(self) -> Snapshot {
        Snapshot {
            timestamp: self.timestamp,
            loss_demand: vec![0.0; self.loads.len()],
            loads: self.loads,
            dispatch: self.dispatch,
            flows: self.flows,
            extra_sources: self.extra,
        }
    }
}

/// Reads a snapshot (`.json`, or `.csv` rows) for `net`, rejecting negative loads.
pub fn parse_snapshot(path: impl AsRef<Path>, net: &Network) -> Result<Snapshot, ModelError> {
    parse_snapshot_with(path, net, &SnapshotOptions::default())
}

pub fn parse_snapshot_with(
    path: impl AsRef<Path>,
    net: &Network,
    opts: &SnapshotOptions,
) -> Result<Snapshot, ModelError> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Snapshot::from_csv_reader(text.as_bytes(), net, opts, path)
    } else {
        Snapshot::from_json_str(&text, net, opts, path)
    }
}

/// Collapses `[sent, received]` pairs to the sending-end flow and charges
/// each line's loss `|sent| − |received|` as extra demand at the receiving bus.
pub fn reconcile_dual_end_flows(
    net: &Network,
    snap: &Snapshot,
    tol: &Tolerance,
) -> Result<Snapshot, ModelError> {
    let mut out = snap.clone();
    for (l, flow) in out.flows.iter_mut().enumerate() {
        let Some(received) = flow.received_mw else {
            continue;
        };
        let sent = flow.mw.abs();
        let received = received.abs();
        if received - sent > tol.bound(sent) {
            return Err(ModelError::InconsistentPair {
                line: net.lines()[l].id.clone(),
                sent,
                received,
            });
        }
        let (from, to) = net.line_ends(l);
        let sink = if flow.mw >= 0.0 { to } else { from };
        out.loss_demand[sink] += (sent - received).max(0.0);
        *flow = LineFlow::single(flow.mw);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> Network {
        let text = r#"{
            "buses": [{"id": "b1"}, {"id": "b2"}],
            "generators": [{"id": "g1", "bus": "b1", "fuel": "coal", "capacity_mw": 200}],
            "lines": [{"id": "l1", "from": "b1", "to": "b2"}]
        }"#;
        Network::from_json_str(text, Path::new("n.json")).unwrap()
    }

    fn parse(text: &str) -> Result<Snapshot, ModelError> {
        Snapshot::from_json_str(text, &net(), &SnapshotOptions::default(), Path::new("s.json"))
    }

    #[test]
    fn missing_load_defaults_to_zero() {
        let s = parse(r#"{"timestamp": "t0", "loads": {"b1": 5}, "dispatch": {"g1": 5}}"#).unwrap();
        assert_eq!(s.loads(), &[5.0, 0.0]);
        assert_eq!(s.flows()[0], LineFlow::single(0.0));
        assert_eq!(s.timestamp(), "t0");
    }

    #[test]
    fn unknown_line_rejected() {
        let err = parse(r#"{"flows": {"l9": 3}}"#).unwrap_err();
        assert!(matches!(err, ModelError::UnknownReference { kind: "line", ref id, .. } if id == "l9"));
    }

    #[test]
    fn negative_dispatch_rejected() {
        let err = parse(r#"{"dispatch": {"g1": -1}}"#).unwrap_err();
        assert!(matches!(err, ModelError::InvalidValue { field: "dispatch", .. }));
    }

    #[test]
    fn malformed_number() {
        let err = parse(r#"{"loads": {"b1": "ten"}}"#).unwrap_err();
        assert!(matches!(err, ModelError::Parse { .. }));
    }

    #[test]
    fn negative_load_policy() {
        let text = r#"{"loads": {"b2": -4}}"#;
        assert!(matches!(parse(text), Err(ModelError::NegativeLoad { .. })));
        let opts = SnapshotOptions {
            negative_loads: NegativeLoadPolicy::ConvertToSource(FuelType::Solar),
        };
        let n = net();
        let s = Snapshot::from_json_str(text, &n, &opts, Path::new("s.json")).unwrap();
        assert_eq!(s.loads(), &[0.0, 0.0]);
        assert_eq!(s.extra_sources().len(), 1);
        assert_eq!(s.extra_sources()[0].mw, 4.0);
        assert_eq!(s.extra_sources()[0].bus, 1);
        assert_eq!(s.total_generation(), 4.0);
        // serialises back as the original negative load
        let again = Snapshot::from_json_str(&s.to_json_string(&n), &n, &opts, Path::new("s.json")).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn reactive_fields_ignored() {
        let s = parse(r#"{"loads": {"b2": 1}, "q_loads": {"b2": 0.3}}"#).unwrap();
        assert_eq!(s.loads()[1], 1.0);
    }

    #[test]
    fn csv_snapshot() {
        let csv = "kind,id,mw,mw_recv\ntimestamp,2024-06-17T11:00\nload,b2,98\ndispatch,g1,100\nflow,l1,100,98\n";
        let n = net();
        let s = Snapshot::from_csv_reader(csv.as_bytes(), &n, &SnapshotOptions::default(), Path::new("s.csv"))
            .unwrap();
        assert_eq!(s.timestamp(), "2024-06-17T11:00");
        assert_eq!(s.flows()[0], LineFlow::dual(100.0, 98.0));
        let bad = "load,b2,x\n";
        let err = Snapshot::from_csv_reader(bad.as_bytes(), &n, &SnapshotOptions::default(), Path::new("s.csv"))
            .unwrap_err();
        assert!(matches!(err, ModelError::Parse { line: 1, .. }));
    }

    fn dual(sent: f64, received: f64) -> Result<Snapshot, ModelError> {
        let n = net();
        let s = Snapshot::new(&n, "t", vec![0.0, 0.0], vec![sent], vec![LineFlow::dual(sent, received)]).unwrap();
        reconcile_dual_end_flows(&n, &s, &Tolerance::default())
    }

    #[test]
    fn reconcile_pairs() {
        let s = dual(100.0, 98.0).unwrap();
        assert_eq!(s.flows()[0], LineFlow::single(100.0));
        assert_eq!(s.loss_demand(), &[0.0, 2.0]);

        let s = dual(100.0, 100.0).unwrap();
        assert_eq!(s.loss_demand(), &[0.0, 0.0]);

        assert!(matches!(dual(100.0, 103.0), Err(ModelError::InconsistentPair { .. })));
    }

    #[test]
    fn reconcile_reversed_flow_charges_from_bus() {
        let n = net();
        let s = Snapshot::new(&n, "t", vec![0.0, 0.0], vec![0.0], vec![LineFlow::dual(-50.0, 49.0)]).unwrap();
        let r = reconcile_dual_end_flows(&n, &s, &Tolerance::default()).unwrap();
        assert_eq!(r.loss_demand(), &[1.0, 0.0]);
    }
}
