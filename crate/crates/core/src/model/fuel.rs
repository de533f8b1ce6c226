use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_nonnegative, Generator, ModelError, Network};

/// Generator fuel category. Unrecognised names are kept verbatim as
/// [`FuelType::Other`] so custom emission tables can price them.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum FuelType {
    Coal,
    PetroleumLiquids,
    NaturalGas,
    Nuclear,
    Hydro,
    Biomass,
    Wind,
    Solar,
    Geothermal,
    OtherImport,
    Other(String),
}

impl FuelType {
    pub const BUILTIN: [FuelType; 10] = [
        FuelType::Coal,
        FuelType::PetroleumLiquids,
        FuelType::NaturalGas,
        FuelType::Nuclear,
        FuelType::Hydro,
        FuelType::Biomass,
        FuelType::Wind,
        FuelType::Solar,
        FuelType::Geothermal,
        FuelType::OtherImport,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            FuelType::Coal => "coal",
            FuelType::PetroleumLiquids => "petroleum_liquids",
            FuelType::NaturalGas => "natural_gas",
            FuelType::Nuclear => "nuclear",
            FuelType::Hydro => "hydro",
            FuelType::Biomass => "biomass",
            FuelType::Wind => "wind",
            FuelType::Solar => "solar",
            FuelType::Geothermal => "geothermal",
            FuelType::OtherImport => "other_import",
            FuelType::Other(name) => name,
        }
    }

    /// Renewable category of the built-in table (nuclear is low-carbon, not
    /// renewable).
    pub fn is_renewable(&self) -> bool {
        matches!(
            self,
            FuelType::Hydro | FuelType::Biomass | FuelType::Wind | FuelType::Solar | FuelType::Geothermal
        )
    }
}

impl fmt::Display for FuelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FuelType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .map(|c| match c {
                ' ' | '-' | '/' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        Ok(match key.as_str() {
            "coal" => FuelType::Coal,
            "petroleum_liquids" | "petroleum" | "oil" => FuelType::PetroleumLiquids,
            "natural_gas" | "gas" | "ng" => FuelType::NaturalGas,
            "nuclear" => FuelType::Nuclear,
            "hydro" => FuelType::Hydro,
            "biomass" => FuelType::Biomass,
            "wind" => FuelType::Wind,
            "solar" => FuelType::Solar,
            "geothermal" => FuelType::Geothermal,
            "other_import" | "import" | "other" => FuelType::OtherImport,
            _ => FuelType::Other(s.trim().to_string()),
        })
    }
}

impl From<String> for FuelType {
    fn from(s: String) -> Self {
        let Ok(fuel) = s.parse();
        fuel
    }
}

impl From<FuelType> for String {
    fn from(f: FuelType) -> Self {
        f.as_str().to_string()
    }
}

/// Fuel → emission rate in metric tonnes CO₂ per MWh.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionTable {
    rates: BTreeMap<FuelType, f64>,
}

impl Default for EmissionTable {
    /// The EIA-derived fuel table.
    fn default() -> Self {
        let rates = [
            (FuelType::Coal, 0.82),
            (FuelType::PetroleumLiquids, 0.656),
            (FuelType::NaturalGas, 0.44),
            (FuelType::Nuclear, 0.0),
            (FuelType::Hydro, 0.0),
            (FuelType::Biomass, 0.23),
            (FuelType::Wind, 0.0),
            (FuelType::Solar, 0.0),
            (FuelType::Geothermal, 0.038),
            (FuelType::OtherImport, 0.43),
        ];
        Self {
            rates: rates.into_iter().collect(),
        }
    }
}

impl EmissionTable {
    pub fn new(rates: impl IntoIterator<Item = (FuelType, f64)>) -> Result<Self, ModelError> {
        let mut table = BTreeMap::new();
        for (fuel, rate) in rates {
            check_nonnegative("emission rate", fuel.as_str(), rate)?;
            if table.insert(fuel.clone(), rate).is_some() {
                return Err(ModelError::DuplicateId {
                    kind: "fuel",
                    id: fuel.to_string(),
                });
            }
        }
        Ok(Self { rates: table })
    }

    /// Reads `fuel,rate_t_per_mwh` rows. A header row is optional.
    pub fn from_csv_path(path: &Path) -> Result<Self, ModelError> {
        let file = std::fs::File::open(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn from_csv_reader(reader: impl Read, origin: &str) -> Result<Self, ModelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| csv_error(origin, i + 1, e.to_string()))?;
            let line = record.position().map_or(i + 1, |p| p.line() as usize);
            if record.len() != 2 {
                return Err(csv_error(origin, line, "expected `fuel,rate_t_per_mwh`".into()));
            }
            let rate: f64 = match record[1].parse() {
                Ok(r) => r,
                Err(_) if i == 0 => continue, // header
                Err(e) => return Err(csv_error(origin, line, format!("rate: {e}"))),
            };
            let Ok(fuel) = record[0].parse::<FuelType>();
            rows.push((fuel, rate));
        }
        Self::new(rows)
    }

    pub fn rate(&self, fuel: &FuelType) -> Option<f64> {
        self.rates.get(fuel).copied()
    }

    /// Override if present, else the table rate for `fuel`.
    pub fn resolve(&self, fuel: &FuelType, rate_override: Option<f64>) -> Result<f64, ModelError> {
        rate_override
            .or_else(|| self.rate(fuel))
            .ok_or_else(|| ModelError::UnknownFuel(fuel.clone()))
    }

    /// Every generator of `net` has an override or a table entry.
    pub fn check_covers(&self, net: &Network) -> Result<(), ModelError> {
        net.generators()
            .iter()
            .try_for_each(|g| self.resolve(&g.fuel, g.rate_override).map(|_| ()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FuelType, f64)> {
        self.rates.iter().map(|(f, r)| (f, *r))
    }
}

/// Emission rate of one generator under `table`.
pub fn emission_rate(table: &EmissionTable, gen: &Generator) -> Result<f64, ModelError> {
    table.resolve(&gen.fuel, gen.rate_override)
}

fn csv_error(origin: &str, line: usize, message: String) -> ModelError {
    ModelError::Parse {
        path: origin.to_string(),
        line,
        column: 0,
        message,
    }
}
