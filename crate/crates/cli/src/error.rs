use coreset::CoresetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] CoresetError),
}

impl CliError {
    /// 0 success, 1 other failure, 2 input, 3 config, 4 capacity.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Config(_) => 3,
            CliError::Core(e) => match e.root() {
                CoresetError::Input(_) | CoresetError::Dimension { .. } => 2,
                CoresetError::Config(_) => 3,
                CoresetError::Capacity { .. } => 4,
                _ => 1,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_context_does_not_hide_the_code() {
        let e = CliError::Core(CoresetError::Stage {
            index: 1,
            label: "kernelfilter".into(),
            source: Box::new(CoresetError::Capacity {
                what: "lift".into(),
                required: 10,
                limit: 5,
            }),
        });
        assert_eq!(e.exit_code(), 4);
        assert_eq!(CliError::Core(CoresetError::Dimension { expected: 2, found: 3 }).exit_code(), 2);
        assert_eq!(CliError::Core(CoresetError::Numerical("x".into())).exit_code(), 1);
    }
}
