use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One capability row: a resource supports `method` on `attribut` within
/// `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDef {
    pub id: String,
    pub method: String,
    pub attribut: String,
    pub min: f64,
    pub max: f64,
    pub unit: String,
}

impl ResourceDef {
    pub fn new(id: &str, method: &str, attribut: &str, min: f64, max: f64, unit: &str) -> Self {
        Self {
            id: id.into(),
            method: method.into(),
            attribut: attribut.into(),
            min,
            max,
            unit: unit.into(),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.min <= value && value <= self.max
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceTable {
    pub resources: Vec<ResourceDef>,
}

impl ResourceTable {
    pub fn new(resources: Vec<ResourceDef>) -> Self {
        Self { resources }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        let mut seen = BTreeSet::new();
        self.resources
            .iter()
            .map(|r| r.id.as_str())
            .filter(move |id| seen.insert(*id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectorKind {
    Switch,
    Mux,
}

/// A switch (`SwN.M`) or multiplexer (`MxN.M`) position: group `N`,
/// position `M`. At most one position per group is engaged at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Connector {
    pub kind: ConnectorKind,
    pub group: u32,
    pub position: u32,
}

impl Connector {
    pub fn switch(group: u32, position: u32) -> Self {
        Self {
            kind: ConnectorKind::Switch,
            group,
            position,
        }
    }

    pub fn mux(group: u32, position: u32) -> Self {
        Self {
            kind: ConnectorKind::Mux,
            group,
            position,
        }
    }

    pub fn group_key(&self) -> (ConnectorKind, u32) {
        (self.kind, self.group)
    }
}

impl fmt::Display for Connector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            ConnectorKind::Switch => "Sw",
            ConnectorKind::Mux => "Mx",
        };
        write!(f, "{prefix}{}.{}", self.group, self.position)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid connector {0:?}: expected SwN.M or MxN.M")]
pub struct ConnectorParseError(pub String);

impl FromStr for Connector {
    type Err = ConnectorParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ConnectorParseError(s.to_string());
        if s.len() < 2 || !s.is_char_boundary(2) {
            return Err(err());
        }
        let (prefix, rest) = s.split_at(2);
        let kind = match prefix.to_ascii_lowercase().as_str() {
            "sw" => ConnectorKind::Switch,
            "mx" => ConnectorKind::Mux,
            _ => return Err(err()),
        };
        let (group, position) = rest.split_once('.').ok_or_else(err)?;
        let num = |t: &str| -> Result<u32, ConnectorParseError> {
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            t.parse().map_err(|_| err())
        };
        Ok(Connector {
            kind,
            group: num(group)?,
            position: num(position)?,
        })
    }
}

impl Serialize for Connector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Connector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which resource reaches which pin, and through which connector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConnectionMatrix {
    /// Row order.
    pub resources: Vec<String>,
    /// Column order.
    pub pins: Vec<String>,
    cells: BTreeMap<(String, String), Connector>,
}

impl ConnectionMatrix {
    pub fn new(resources: Vec<String>, pins: Vec<String>) -> Self {
        Self {
            resources,
            pins,
            cells: BTreeMap::new(),
        }
    }

    /// Adds a cell, registering the resource row / pin column if new.
    pub fn connect(&mut self, resource: &str, pin: &str, connector: Connector) {
        if !self.resources.iter().any(|r| r == resource) {
            self.resources.push(resource.to_string());
        }
        if !self.pins.iter().any(|p| p == pin) {
            self.pins.push(pin.to_string());
        }
        self.cells
            .insert((resource.to_string(), pin.to_string()), connector);
    }

    pub fn connector(&self, resource: &str, pin: &str) -> Option<Connector> {
        self.cells
            .get(&(resource.to_string(), pin.to_string()))
            .copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&str, &str, Connector)> {
        self.cells
            .iter()
            .map(|((r, p), c)| (r.as_str(), p.as_str(), *c))
    }

    pub fn without_resource(&self, resource: &str) -> Self {
        let mut out = self.clone();
        out.resources.retain(|r| r != resource);
        out.cells.retain(|(r, _), _| r != resource);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StandError {
    #[error("connection matrix row {0} has no entry in the resource table")]
    UnknownResource(String),
    #[error("resource {id}: min {min} exceeds max {max}")]
    InvertedRange {
        id: String,
        min: String,
        max: String,
    },
}

/// Methods routed over the stand's bus interface rather than through the
/// switch matrix.
pub const DEFAULT_BUS_METHODS: &[&str] = &["put_can", "get_can"];

/// Everything the stand knows about itself: capabilities, wiring, and which
/// methods travel over the bus.
#[derive(Debug, Clone, PartialEq)]
pub struct StandModel {
    pub resources: ResourceTable,
    pub matrix: ConnectionMatrix,
    pub bus_methods: BTreeSet<String>,
}

impl StandModel {
    pub fn new(resources: ResourceTable, matrix: ConnectionMatrix) -> Result<Self, StandError> {
        for r in &resources.resources {
            if r.min > r.max {
                return Err(StandError::InvertedRange {
                    id: r.id.clone(),
                    min: r.min.to_string(),
                    max: r.max.to_string(),
                });
            }
        }
        for id in &matrix.resources {
            if !resources.resources.iter().any(|r| &r.id == id) {
                return Err(StandError::UnknownResource(id.clone()));
            }
        }
        Ok(Self {
            resources,
            matrix,
            bus_methods: DEFAULT_BUS_METHODS.iter().map(|m| m.to_string()).collect(),
        })
    }

    pub fn with_bus_methods<I, S>(mut self, methods: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.bus_methods = methods.into_iter().map(Into::into).collect();
        self
    }

    pub fn is_bus_method(&self, method: &str) -> bool {
        self.bus_methods.contains(method)
    }

    /// Drops every capability row and matrix row of `id`.
    pub fn without_resource(&self, id: &str) -> Self {
        let mut out = self.clone();
        out.resources.resources.retain(|r| r.id != id);
        out.matrix = self.matrix.without_resource(id);
        out
    }

    /// The DVM and two resistor decades wired to the interior-light and
    /// door-switch pins.
    pub fn example() -> Self {
        let resources = ResourceTable::new(vec![
            ResourceDef::new("Ress1", "get_u", "u", -60.0, 60.0, "V"),
            ResourceDef::new("Ress2", "put_r", "r", 0.0, 1.0e6, "Ω"),
            ResourceDef::new("Ress3", "put_r", "r", 0.0, 2.0e5, "Ω"),
        ]);
        let mut matrix = ConnectionMatrix::new(
            vec!["Ress1".into(), "Ress2".into(), "Ress3".into()],
            ["INT_ILL_F", "INT_ILL_R", "DS_FL", "DS_FR", "DS_RL", "DS_RR"]
                .iter()
                .map(|p| p.to_string())
                .collect(),
        );
        matrix.connect("Ress1", "INT_ILL_F", Connector::switch(1, 1));
        matrix.connect("Ress1", "INT_ILL_R", Connector::switch(1, 2));
        for (i, pin) in ["DS_FL", "DS_FR", "DS_RL", "DS_RR"].iter().enumerate() {
            let group = i as u32 + 1;
            matrix.connect("Ress2", pin, Connector::mux(group, 2));
            matrix.connect("Ress3", pin, Connector::mux(group, 1));
        }
        StandModel::new(resources, matrix).expect("example stand is consistent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn connector_syntax() {
        assert_eq!("Mx1.1".parse::<Connector>().unwrap(), Connector::mux(1, 1));
        assert_eq!(
            "Sw1.2".parse::<Connector>().unwrap(),
            Connector::switch(1, 2)
        );
        assert_eq!("sw10.3".parse::<Connector>().unwrap().to_string(), "Sw10.3");
        for bad in [
            "Rl1.1", "Mx1", "Mx.1", "Mx1.", "Mx1.a", "Sw-1.2", "", "M", "Ω1.1",
        ] {
            assert!(bad.parse::<Connector>().is_err(), "{bad}");
        }
    }

    #[test]
    fn example_stand_wiring() {
        let stand = StandModel::example();
        assert_eq!(
            stand.matrix.connector("Ress3", "DS_FL"),
            Some(Connector::mux(1, 1))
        );
        assert_eq!(
            stand.matrix.connector("Ress2", "DS_RR"),
            Some(Connector::mux(4, 2))
        );
        assert_eq!(stand.matrix.connector("Ress1", "DS_FL"), None);
        assert!(stand.is_bus_method("put_can"));
        assert!(!stand.is_bus_method("put_r"));
    }

    #[test]
    fn rejects_inconsistent_stands() {
        let stand = StandModel::example();
        let err = StandModel::new(
            ResourceTable::new(stand.resources.resources[1..].to_vec()),
            stand.matrix.clone(),
        )
        .unwrap_err();
        assert_eq!(err, StandError::UnknownResource("Ress1".into()));

        let bad = ResourceTable::new(vec![ResourceDef::new("R", "put_r", "r", 5.0, 1.0, "Ω")]);
        assert!(matches!(
            StandModel::new(bad, ConnectionMatrix::default()),
            Err(StandError::InvertedRange { .. })
        ));
    }

    #[test]
    fn removing_a_resource() {
        let stand = StandModel::example().without_resource("Ress1");
        assert_eq!(stand.resources.resources.len(), 2);
        assert_eq!(stand.matrix.connector("Ress1", "INT_ILL_F"), None);
        assert!(stand.matrix.resources.iter().all(|r| r != "Ress1"));
    }
}
