use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskId {
    OpenGripper,
    CloseGripper,
    Reach,
    Lift,
    MoveObject,
    Bring,
    Stack,
    UnstackStack,
    Insert,
}

impl TaskId {
    pub const ALL: [TaskId; 9] = [
        TaskId::OpenGripper,
        TaskId::CloseGripper,
        TaskId::Reach,
        TaskId::Lift,
        TaskId::MoveObject,
        TaskId::Bring,
        TaskId::Stack,
        TaskId::UnstackStack,
        TaskId::Insert,
    ];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::OpenGripper => "open-gripper",
            TaskId::CloseGripper => "close-gripper",
            TaskId::Reach => "reach",
            TaskId::Lift => "lift",
            TaskId::MoveObject => "move-object",
            TaskId::Bring => "bring",
            TaskId::Stack => "stack",
            TaskId::UnstackStack => "unstack-stack",
            TaskId::Insert => "insert",
        }
    }

    /// Consecutive steps a predicate must hold before it counts as success.
    pub fn hold_steps(self) -> usize {
        match self {
            TaskId::MoveObject => 20,
            _ => 10,
        }
    }

    /// Auxiliary tasks used when this task is the main task.
    pub fn default_auxiliaries(self) -> Vec<TaskId> {
        use TaskId::*;
        match self {
            Stack | UnstackStack | Bring => vec![OpenGripper, CloseGripper, Reach, Lift, MoveObject],
            Insert => vec![OpenGripper, CloseGripper, Bring, Reach, Lift, MoveObject],
            MoveObject => vec![OpenGripper, CloseGripper, Reach, Lift],
            Lift => vec![OpenGripper, CloseGripper, Reach],
            Reach => vec![OpenGripper, CloseGripper],
            OpenGripper | CloseGripper => vec![],
        }
    }

    /// Reset variant implied by a main task.
    pub fn reset_variant(self) -> ResetVariant {
        if self == TaskId::UnstackStack {
            ResetVariant::UnstackStack
        } else {
            ResetVariant::Standard
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        TaskId::ALL
            .iter()
            .copied()
            .find(|t| t.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown task {s:?}")))
    }
}

/// Parses a comma-separated task list; the empty string is the empty list.
pub fn parse_task_list(s: &str) -> Result<Vec<TaskId>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}

pub fn format_task_list(tasks: &[TaskId]) -> String {
    tasks.iter().map(|t| t.name()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetVariant {
    Standard,
    /// Green block starts stacked on the blue block.
    UnstackStack,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in TaskId::ALL {
            assert_eq!(t.name().parse::<TaskId>().unwrap(), t);
            assert_eq!(TaskId::from_code(t.code()), Some(t));
        }
        assert!("juggle".parse::<TaskId>().is_err());
    }

    #[test]
    fn stack_auxiliaries_follow_table() {
        use TaskId::*;
        assert_eq!(
            Stack.default_auxiliaries(),
            vec![OpenGripper, CloseGripper, Reach, Lift, MoveObject]
        );
        assert!(Insert.default_auxiliaries().contains(&Bring));
    }

    #[test]
    fn task_lists_parse() {
        assert_eq!(
            parse_task_list("reach, lift").unwrap(),
            vec![TaskId::Reach, TaskId::Lift]
        );
        assert!(parse_task_list("").unwrap().is_empty());
    }
}
