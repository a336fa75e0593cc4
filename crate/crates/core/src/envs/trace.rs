use std::io::Write;

use super::Action;
use crate::error::Result;

/// Per-step debug log: `episode,step,action,reward`.
pub struct StepTrace<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> StepTrace<W> {
    pub fn new(inner: W) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(["episode", "step", "action", "reward"])?;
        Ok(Self { writer })
    }

    pub fn record(&mut self, episode: u64, step: usize, action: Action, reward: f64) -> Result<()> {
        self.writer.write_record([
            episode.to_string(),
            step.to_string(),
            action.as_f64().to_string(),
            reward.to_string(),
        ])?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| crate::error::Error::Io(e.into_error()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_one_line_per_step() {
        let mut t = StepTrace::new(Vec::new()).unwrap();
        t.record(0, 0, Action::Discrete(1), 0.5).unwrap();
        t.record(0, 1, Action::Continuous(0.25), 1.0).unwrap();
        let out = String::from_utf8(t.into_inner().unwrap()).unwrap();
        assert_eq!(out, "episode,step,action,reward\n0,0,1,0.5\n0,1,0.25,1\n");
    }
}
