use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Backend, BackendError, LiveBackend, LiveBackendConfig, ScriptedBackend, DEFAULT_MEMORY_WINDOW};
use crate::exec::ExecConfig;
use crate::policy::{ConditionProfile, PolicyConfig, ProfileSpec, DEFAULT_ENGAGEMENT_WINDOW_MS};
use crate::presence::{DEFAULT_CHARS_PER_TICK, TICK_MS};
use crate::trigger::{TriggerConfig, IDLE_BASE_MS, IDLE_INCREMENT_MS, SELECTION_BASE_MS, SELECTION_INCREMENT_MS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{0}")]
    Profile(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TimerSettings {
    pub idle_base_ms: u64,
    pub idle_inc_ms: u64,
    pub sel_base_ms: u64,
    pub sel_inc_ms: u64,
}

impl Default for TimerSettings {
    fn default() -> Self {
        Self {
            idle_base_ms: IDLE_BASE_MS,
            idle_inc_ms: IDLE_INCREMENT_MS,
            sel_base_ms: SELECTION_BASE_MS,
            sel_inc_ms: SELECTION_INCREMENT_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TypingRate {
    pub chars_per_tick: usize,
    pub tick_ms: u64,
}

impl Default for TypingRate {
    fn default() -> Self {
        Self {
            chars_per_tick: DEFAULT_CHARS_PER_TICK,
            tick_ms: TICK_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum BackendConfig {
    Live(LiveBackendConfig),
    #[serde(rename_all = "camelCase")]
    Scripted { fixture_path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SessionConfig {
    pub profile: ProfileSpec,
    pub timers: TimerSettings,
    pub typing_rate: TypingRate,
    pub engagement_window_ms: u64,
    pub backend: Option<BackendConfig>,
    pub task_id: Option<String>,
    pub trace_path: Option<PathBuf>,
    pub memory_window: usize,
    pub tab_width: usize,
    pub trivial_lines: Vec<String>,
    pub completed_cooldown_ms_per_ignore: u64,
    pub exec: ExecConfig,
    pub session_id: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let trig = TriggerConfig::default();
        Self {
            profile: ProfileSpec::default(),
            timers: TimerSettings::default(),
            typing_rate: TypingRate::default(),
            engagement_window_ms: DEFAULT_ENGAGEMENT_WINDOW_MS,
            backend: None,
            task_id: None,
            trace_path: None,
            memory_window: DEFAULT_MEMORY_WINDOW,
            tab_width: trig.tab_width,
            trivial_lines: trig.trivial_lines,
            completed_cooldown_ms_per_ignore: trig.completed_cooldown_ms_per_ignore,
            exec: ExecConfig::default(),
            session_id: "session".into(),
        }
    }
}

impl SessionConfig {
    pub fn with_profile(profile: ConditionProfile) -> Self {
        Self {
            profile: ProfileSpec::Custom(profile),
            ..Self::default()
        }
    }

    /// Reads a JSON config. Relative fixture and trace paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut config: SessionConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.into(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(BackendConfig::Scripted { fixture_path }) = &mut config.backend {
            if fixture_path.is_relative() {
                *fixture_path = base.join(&*fixture_path);
            }
        }
        if let Some(trace) = &mut config.trace_path {
            if trace.is_relative() {
                *trace = base.join(&*trace);
            }
        }
        config.resolve_profile()?;
        Ok(config)
    }

    pub fn resolve_profile(&self) -> Result<ConditionProfile, ConfigError> {
        self.profile.resolve().map_err(ConfigError::Profile)
    }

    pub fn trigger_config(&self) -> TriggerConfig {
        TriggerConfig {
            idle_base_ms: self.timers.idle_base_ms,
            idle_increment_ms: self.timers.idle_inc_ms,
            selection_base_ms: self.timers.sel_base_ms,
            selection_increment_ms: self.timers.sel_inc_ms,
            tab_width: self.tab_width,
            trivial_lines: self.trivial_lines.clone(),
            completed_cooldown_ms_per_ignore: self.completed_cooldown_ms_per_ignore,
        }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            engagement_window_ms: self.engagement_window_ms,
            ..PolicyConfig::default()
        }
    }

    /// Instantiates the configured model backend. A live backend whose key
    /// variable is unset fails here, naming the variable.
    pub fn build_backend(&self) -> Result<Arc<dyn Backend>, ConfigError> {
        match &self.backend {
            Some(BackendConfig::Live(live)) => Ok(Arc::new(LiveBackend::from_env(live.clone())?)),
            Some(BackendConfig::Scripted { fixture_path }) => Ok(Arc::new(ScriptedBackend::from_file(fixture_path)?)),
            None => Ok(Arc::new(ScriptedBackend::default())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_thresholds() {
        let c: SessionConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c.timers, TimerSettings { idle_base_ms: 30000, idle_inc_ms: 30000, sel_base_ms: 15000, sel_inc_ms: 15000 });
        assert_eq!(c.engagement_window_ms, 60000);
        assert_eq!(c.typing_rate.chars_per_tick, 40);
        assert_eq!(c.resolve_profile().unwrap(), ConditionProfile::codellaborator());
    }

    #[test]
    fn profile_by_name_and_backend_shapes() {
        let c: SessionConfig = serde_json::from_str(
            r#"{"profile":"CodeGhost","backend":{"kind":"live","endpointUrl":"http://x","keyEnvVar":"PAIRLOOP_TEST_UNSET_KEY"}}"#,
        )
        .unwrap();
        assert_eq!(c.resolve_profile().unwrap(), ConditionProfile::code_ghost());
        let err = c.build_backend().err().unwrap();
        assert!(err.to_string().contains("PAIRLOOP_TEST_UNSET_KEY"));
    }
}
