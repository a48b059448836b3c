use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Variant;
use crate::crypto::{ParseError, Term};
use crate::prng::{self, PrngError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid PRNG setting: {0}")]
    Prng(#[from] PrngError),
    #[error("invalid term in scenario: {0}")]
    Term(#[from] ParseError),
    #[error("duplicate {what} '{value}'")]
    Duplicate { what: &'static str, value: String },
    #[error("scenario has no users")]
    NoUsers,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSpec {
    pub name: String,
    pub email: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phone: Option<String>,
}

/// A phone number the WS holds on file for an email.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    pub email: String,
    pub phone: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerSpec {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_attacker_name")]
    pub name: String,
    #[serde(default = "default_attacker_email")]
    pub email: String,
    /// Extra terms the attacker knows from the start (s-expressions).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub knows: Vec<String>,
}

fn default_true() -> bool {
    true
}

fn default_attacker_name() -> String {
    "eve".into()
}

fn default_attacker_email() -> String {
    "eve@evil.dom".into()
}

impl Default for AttackerSpec {
    fn default() -> Self {
        AttackerSpec { enabled: true, name: default_attacker_name(), email: default_attacker_email(), knows: Vec::new() }
    }
}

/// Scenario fixture: principals, the WS phone directory, variant, attacker and seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub variant: Variant,
    /// Hexadecimal PRNG seed.
    pub seed: String,
    /// Hexadecimal skew tent map parameter; defaults to fix64(0.499).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prng_param: Option<String>,
    pub users: Vec<UserSpec>,
    /// Defaults to every user that lists a phone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<Vec<DirectoryEntry>>,
    #[serde(default)]
    pub attacker: AttackerSpec,
}

impl Scenario {
    /// Two users with phones on file and an active attacker.
    pub fn default_for(variant: Variant) -> Self {
        Scenario {
            variant,
            seed: "0123456789abcdef".into(),
            prng_param: None,
            users: vec![
                UserSpec { name: "alice".into(), email: "alice@email.dom".into(), phone: Some("+34600000001".into()) },
                UserSpec { name: "bob".into(), email: "bob@email.dom".into(), phone: Some("+34600000002".into()) },
            ],
            directory: None,
            attacker: AttackerSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.users.is_empty() {
            return Err(ScenarioError::NoUsers);
        }
        let mut names = BTreeSet::new();
        let mut emails = BTreeSet::new();
        for u in &self.users {
            if !names.insert(u.name.as_str()) || u.name == self.attacker.name {
                return Err(ScenarioError::Duplicate { what: "principal name", value: u.name.clone() });
            }
            if !emails.insert(u.email.as_str()) || u.email == self.attacker.email {
                return Err(ScenarioError::Duplicate { what: "email", value: u.email.clone() });
            }
        }
        self.seed_value()?;
        self.param_value()?;
        for t in &self.attacker.knows {
            crate::crypto::parse_term(t)?;
        }
        Ok(())
    }

    pub fn seed_value(&self) -> Result<u64, PrngError> {
        prng::parse_hex_u64(&self.seed)
    }

    pub fn param_value(&self) -> Result<u64, PrngError> {
        let param = match &self.prng_param {
            Some(p) => prng::parse_hex_u64(p)?,
            None => prng::DEFAULT_PARAM,
        };
        if param == 0 || param == u64::MAX {
            return Err(PrngError::InvalidParameter("map parameter must lie strictly inside (0, 1)"));
        }
        Ok(param)
    }

    /// email -> phone, as provisioned at the WS.
    pub fn phone_directory(&self) -> BTreeMap<String, String> {
        match &self.directory {
            Some(entries) => entries.iter().map(|e| (e.email.clone(), e.phone.clone())).collect(),
            None => self
                .users
                .iter()
                .filter_map(|u| u.phone.clone().map(|p| (u.email.clone(), p)))
                .collect(),
        }
    }

    pub fn email_term(email: &str) -> Term {
        Term::name(email, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_round_trips() {
        let s = Scenario::default_for(Variant::ChatSrp);
        let text = serde_json::to_string_pretty(&s).unwrap();
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
        assert_eq!(s.phone_directory().len(), 2);
    }

    #[test]
    fn rejects_duplicates_and_bad_seeds() {
        let mut s = Scenario::default_for(Variant::ChatSrp);
        s.users[1].email = s.users[0].email.clone();
        assert!(matches!(s.validate(), Err(ScenarioError::Duplicate { .. })));
        let mut s = Scenario::default_for(Variant::ChatSrp);
        s.seed = "zz".into();
        assert!(matches!(s.validate(), Err(ScenarioError::Prng(_))));
        let mut s = Scenario::default_for(Variant::ChatSrp);
        s.seed = "0".into();
        assert!(s.validate().is_ok(), "seed 0 is remapped per stream");
    }

    #[test]
    fn attacker_section_is_optional() {
        let text = r#"{"variant":"ebia","seed":"1","users":[{"name":"alice","email":"a@x"}]}"#;
        let s = Scenario::from_json(text).unwrap();
        assert!(s.attacker.enabled);
        assert_eq!(s.attacker.name, "eve");
        assert!(s.phone_directory().is_empty());
    }
}
