use serde::{Deserialize, Serialize};

/// One line of the world's JSON-lines log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Event {
    Spawn {
        tick: u64,
        pid: u64,
        file: String,
        parent: Option<u64>,
    },
    Death {
        tick: u64,
        pid: u64,
        file: String,
        cause: String,
    },
    FileCreated {
        tick: u64,
        pid: Option<u64>,
        file: String,
        parent: Option<String>,
        generation: u32,
    },
    FileReplaced {
        tick: u64,
        pid: Option<u64>,
        file: String,
        parent: Option<String>,
        generation: u32,
    },
    FileDeleted {
        tick: u64,
        file: String,
        cause: String,
    },
    Mutation {
        tick: u64,
        pid: u64,
        file: String,
        offset: u32,
        bit: u8,
        /// Which of the writing process's copies this was, counting from 0.
        interval: Option<u32>,
    },
}

impl Event {
    pub fn tick(&self) -> u64 {
        match self {
            Event::Spawn { tick, .. }
            | Event::Death { tick, .. }
            | Event::FileCreated { tick, .. }
            | Event::FileReplaced { tick, .. }
            | Event::FileDeleted { tick, .. }
            | Event::Mutation { tick, .. } => *tick,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

pub mod cause {
    pub const EXITED: &str = "exited";
    pub const BUDGET: &str = "budget-exhausted";
    pub const BAD_GENOME: &str = "bad-genome";
    pub const MULTIPLE_INSTANCES: &str = "guard-multiple-instances";
    pub const CLONE: &str = "guard-clones";
    pub const CORPSE: &str = "guard-corpse";
    pub const PROCESS_AGE: &str = "guard-process-age";
    pub const OVERFLOW: &str = "guard-overflow";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let e = Event::Death {
            tick: 3,
            pid: 7,
            file: "abcdefgh.rpw".into(),
            cause: cause::EXITED.into(),
        };
        let line = e.to_json_line();
        assert_eq!(
            line,
            r#"{"type":"death","tick":3,"pid":7,"file":"abcdefgh.rpw","cause":"exited"}"#
        );
        assert_eq!(serde_json::from_str::<Event>(&line).unwrap(), e);
    }
}
