//! Core domain types shared by every memory subsystem.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Custom key/value metadata attached to an episode. Values are plain strings.
pub type Metadata = BTreeMap<String, String>;

/// Isolation tuple for every stored memory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemoryScope {
    pub org_id: String,
    pub project_id: String,
    pub user_id: String,
    pub agent_id: String,
    pub session_id: String,
}

impl MemoryScope {
    pub fn new(
        org_id: impl Into<String>,
        project_id: impl Into<String>,
        user_id: impl Into<String>,
        agent_id: impl Into<String>,
        session_id: impl Into<String>,
    ) -> Self {
        Self {
            org_id: org_id.into(),
            project_id: project_id.into(),
            user_id: user_id.into(),
            agent_id: agent_id.into(),
            session_id: session_id.into(),
        }
    }

    /// Returns the name of the first empty component, if any.
    pub fn invalid_field(&self) -> Option<&'static str> {
        [
            ("org_id", &self.org_id),
            ("project_id", &self.project_id),
            ("user_id", &self.user_id),
            ("agent_id", &self.agent_id),
            ("session_id", &self.session_id),
        ]
        .into_iter()
        .find(|(_, v)| v.trim().is_empty())
        .map(|(name, _)| name)
    }

    pub fn is_valid(&self) -> bool {
        self.invalid_field().is_none()
    }

    pub fn user_scope(&self) -> UserScope {
        UserScope {
            org_id: self.org_id.clone(),
            project_id: self.project_id.clone(),
            user_id: self.user_id.clone(),
        }
    }

    pub fn agent_key(&self) -> AgentKey {
        AgentKey {
            org_id: self.org_id.clone(),
            project_id: self.project_id.clone(),
            user_id: self.user_id.clone(),
            agent_id: self.agent_id.clone(),
        }
    }

    /// Same tenant and agent, different session.
    pub fn with_session(&self, session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            ..self.clone()
        }
    }
}

impl fmt::Display for MemoryScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}",
            self.org_id, self.project_id, self.user_id, self.agent_id, self.session_id
        )
    }
}

/// The (org, project, user) triple that owns profile memory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserScope {
    pub org_id: String,
    pub project_id: String,
    pub user_id: String,
}

impl UserScope {
    pub fn new(
        org_id: impl Into<String>,
        project_id: impl Into<String>,
        user_id: impl Into<String>,
    ) -> Self {
        Self {
            org_id: org_id.into(),
            project_id: project_id.into(),
            user_id: user_id.into(),
        }
    }

    pub fn is_valid(&self) -> bool {
        !(self.org_id.trim().is_empty()
            || self.project_id.trim().is_empty()
            || self.user_id.trim().is_empty())
    }
}

/// Every session under one (org, project, user, agent).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentKey {
    pub org_id: String,
    pub project_id: String,
    pub user_id: String,
    pub agent_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Producer {
    User,
    Agent,
    System,
}

impl Producer {
    pub fn as_str(self) -> &'static str {
        match self {
            Producer::User => "user",
            Producer::Agent => "agent",
            Producer::System => "system",
        }
    }
}

impl fmt::Display for Producer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Producer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "user" => Ok(Producer::User),
            "agent" | "assistant" => Ok(Producer::Agent),
            "system" => Ok(Producer::System),
            other => Err(format!("unknown producer {other:?}")),
        }
    }
}

/// UTC instant with millisecond precision, stored as milliseconds since the Unix epoch.
///
/// Serialized as an RFC 3339 string with exactly three fractional digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_millis(ms: i64) -> Self {
        Self(ms)
    }

    pub const fn as_millis(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        Utc::now().into()
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        Utc.timestamp_millis_opt(self.0)
            .single()
            .unwrap_or(DateTime::<Utc>::MIN_UTC)
    }

    pub fn to_rfc3339(self) -> String {
        self.to_datetime()
            .to_rfc3339_opts(SecondsFormat::Millis, true)
    }

    pub fn parse(s: &str) -> Result<Self, chrono::ParseError> {
        Ok(DateTime::parse_from_rfc3339(s)?.with_timezone(&Utc).into())
    }

    pub fn plus_millis(self, ms: i64) -> Self {
        Self(self.0 + ms)
    }
}

impl From<DateTime<Utc>> for Timestamp {
    fn from(value: DateTime<Utc>) -> Self {
        Self(value.timestamp_millis())
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Timestamp::parse(&raw).map_err(serde::de::Error::custom)
    }
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(
    /// Engine-unique episode identifier, allocated monotonically.
    EpisodeId
);
id_newtype!(
    /// Engine-unique sentence record identifier.
    SentenceId
);
id_newtype!(ProfileEntryId);

/// One conversational turn, stored verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub id: EpisodeId,
    pub scope: MemoryScope,
    pub sequence: u64,
    pub producer: Producer,
    pub timestamp: Timestamp,
    pub content: String,
    #[serde(default)]
    pub metadata: Metadata,
}
