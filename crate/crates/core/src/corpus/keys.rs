use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CorpusError;

/// ISO-3166 alpha-2 country code, stored uppercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode(String);

impl CountryCode {
    pub fn new(code: &str) -> Result<Self, CorpusError> {
        let code = code.trim();
        if code.len() == 2 && code.chars().all(|c| c.is_ascii_alphabetic()) {
            Ok(CountryCode(code.to_ascii_uppercase()))
        } else {
            Err(CorpusError::InvalidCountry(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CountryCode {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CountryCode::new(s)
    }
}

impl Serialize for CountryCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for CountryCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        CountryCode::new(&raw).map_err(serde::de::Error::custom)
    }
}

macro_rules! slug_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $slug:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $slug)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn slug(self) -> &'static str {
                match self {
                    $($name::$variant => $slug),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.slug())
            }
        }

        impl FromStr for $name {
            type Err = CorpusError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($slug => Ok($name::$variant),)+
                    other => Err(CorpusError::UnknownSlug {
                        kind: stringify!($name),
                        value: other.to_string(),
                    }),
                }
            }
        }
    };
}

slug_enum!(
    /// Energy Union dimension, or `None` for sections that are not split by dimension.
    Dimension {
        Decarbonisation => "decarbonisation",
        EnergyEfficiency => "energy_efficiency",
        EnergySecurity => "energy_security",
        InternalMarket => "internal_market",
        RniCompetitiveness => "rni_competitiveness",
        None => "none",
    }
);

slug_enum!(
    /// Template section of a plan.
    Section {
        Overview => "overview",
        Objectives => "objectives",
        Policies => "policies",
        CurrentSituation => "current_situation",
        ImpactAssessment => "impact_assessment",
    }
);

slug_enum!(
    /// One of the seven modeling subsets.
    SubsetId {
        Decarbonisation => "decarbonisation",
        EnergyEfficiency => "energy_efficiency",
        EnergySecurity => "energy_security",
        InternalMarket => "internal_market",
        RniCompetitiveness => "rni_competitiveness",
        Overview => "overview",
        ImpactAssessment => "impact_assessment",
    }
);

impl Dimension {
    /// The five real dimensions, excluding `None`.
    pub const ENERGY_UNION: [Dimension; 5] =
        [Dimension::Decarbonisation, Dimension::EnergyEfficiency, Dimension::EnergySecurity, Dimension::InternalMarket, Dimension::RniCompetitiveness];
}

impl Section {
    /// Sections that are split by dimension.
    pub const DIMENSIONED: [Section; 3] = [Section::Objectives, Section::Policies, Section::CurrentSituation];

    pub fn is_dimensioned(self) -> bool {
        !matches!(self, Section::Overview | Section::ImpactAssessment)
    }
}

impl SubsetId {
    pub fn is_dimension(self) -> bool {
        self.dimension().is_some()
    }

    pub fn dimension(self) -> Option<Dimension> {
        match self {
            SubsetId::Decarbonisation => Some(Dimension::Decarbonisation),
            SubsetId::EnergyEfficiency => Some(Dimension::EnergyEfficiency),
            SubsetId::EnergySecurity => Some(Dimension::EnergySecurity),
            SubsetId::InternalMarket => Some(Dimension::InternalMarket),
            SubsetId::RniCompetitiveness => Some(Dimension::RniCompetitiveness),
            SubsetId::Overview | SubsetId::ImpactAssessment => None,
        }
    }

    /// Sections whose documents make up this subset.
    pub fn sections(self) -> &'static [Section] {
        match self {
            SubsetId::Overview => &[Section::Overview],
            SubsetId::ImpactAssessment => &[Section::ImpactAssessment],
            _ => &Section::DIMENSIONED,
        }
    }
}

/// Identifies one country × dimension × section text unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DocumentKey {
    pub country: CountryCode,
    pub dimension: Dimension,
    pub section: Section,
}

impl DocumentKey {
    pub fn new(country: CountryCode, dimension: Dimension, section: Section) -> Result<Self, CorpusError> {
        let key = DocumentKey { country, dimension, section };
        key.validate()?;
        Ok(key)
    }

    /// `dimension == none` exactly when the section is not split by dimension.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let needs_none = !self.section.is_dimensioned();
        if needs_none != (self.dimension == Dimension::None) {
            return Err(CorpusError::InvalidKey(self.to_string()));
        }
        Ok(())
    }

    pub fn subset(&self) -> SubsetId {
        match (self.dimension, self.section) {
            (_, Section::Overview) => SubsetId::Overview,
            (_, Section::ImpactAssessment) => SubsetId::ImpactAssessment,
            (Dimension::Decarbonisation, _) => SubsetId::Decarbonisation,
            (Dimension::EnergyEfficiency, _) => SubsetId::EnergyEfficiency,
            (Dimension::EnergySecurity, _) => SubsetId::EnergySecurity,
            (Dimension::InternalMarket, _) => SubsetId::InternalMarket,
            (Dimension::RniCompetitiveness, _) => SubsetId::RniCompetitiveness,
            // validate() rules this out
            (Dimension::None, _) => SubsetId::Overview,
        }
    }
}

impl fmt::Display for DocumentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.country, self.dimension, self.section)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_none_iff_undimensioned_section() {
        let fi = CountryCode::new("fi").unwrap();
        assert!(DocumentKey::new(fi.clone(), Dimension::None, Section::Overview).is_ok());
        assert!(DocumentKey::new(fi.clone(), Dimension::Decarbonisation, Section::Overview).is_err());
        assert!(DocumentKey::new(fi.clone(), Dimension::None, Section::Policies).is_err());
        assert!(DocumentKey::new(fi, Dimension::EnergySecurity, Section::Policies).is_ok());
    }

    #[test]
    fn country_codes() {
        assert_eq!(CountryCode::new("nl").unwrap().as_str(), "NL");
        assert!(CountryCode::new("NLD").is_err());
        assert!(CountryCode::new("1A").is_err());
    }

    #[test]
    fn subset_mapping() {
        let at = CountryCode::new("AT").unwrap();
        let k = DocumentKey::new(at.clone(), Dimension::InternalMarket, Section::CurrentSituation).unwrap();
        assert_eq!(k.subset(), SubsetId::InternalMarket);
        let k = DocumentKey::new(at, Dimension::None, Section::ImpactAssessment).unwrap();
        assert_eq!(k.subset(), SubsetId::ImpactAssessment);
        assert_eq!("rni_competitiveness".parse::<SubsetId>().unwrap(), SubsetId::RniCompetitiveness);
    }
}
