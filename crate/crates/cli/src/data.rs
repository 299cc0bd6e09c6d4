//! Input selection: ISOT file pair, single fixture file, or a split directory.

use std::path::{Path, PathBuf};

use fnd_core::corpus::{
    load_fixture, load_isot, load_labeled_csv, stratified_split, Corpus, SplitSpec,
};

use crate::error::{CliError, StageExt};
use crate::settings::Settings;
use crate::{commands::log, DataArgs};

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";

#[derive(Debug, Clone)]
pub enum DataSource {
    Isot { real: PathBuf, fake: PathBuf },
    Fixture(PathBuf),
    SplitDir(PathBuf),
}

impl DataSource {
    pub fn resolve(s: &mut Settings, args: &DataArgs) -> Result<Self, CliError> {
        let real = s.path("data-real", args.data_real.clone())?;
        let fake = s.path("data-fake", args.data_fake.clone())?;
        let fixture = s.path("fixture", args.fixture.clone())?;
        let split_dir = s.path("split-dir", args.split_dir.clone())?;
        match (real, fake, fixture, split_dir) {
            (Some(real), Some(fake), None, None) => Ok(Self::Isot { real, fake }),
            (None, None, Some(p), None) => Ok(Self::Fixture(p)),
            (None, None, None, Some(d)) => Ok(Self::SplitDir(d)),
            (None, None, None, None) => Err(CliError::Usage(
                "no input data: give --data-real and --data-fake, --fixture, or --split-dir".into(),
            )),
            (Some(_), None, None, None) | (None, Some(_), None, None) => Err(CliError::Usage(
                "--data-real and --data-fake must be given together".into(),
            )),
            _ => Err(CliError::Usage(
                "give exactly one input: --data-real/--data-fake, --fixture, or --split-dir".into(),
            )),
        }
    }

    fn read(
        path: &Path,
        f: impl FnOnce(&Path) -> fnd_core::Result<Corpus>,
    ) -> Result<Corpus, CliError> {
        let c = f(path).stage("ingest")?;
        log(format!(
            "read {} documents from {}",
            c.len(),
            path.display()
        ));
        Ok(c)
    }

    /// Every document of the source.
    pub fn load_all(&self) -> Result<Corpus, CliError> {
        match self {
            Self::SplitDir(d) => {
                let mut docs = Self::read(&d.join(TRAIN_FILE), |p| load_labeled_csv(p))?
                    .documents()
                    .to_vec();
                docs.extend_from_slice(
                    Self::read(&d.join(TEST_FILE), |p| load_labeled_csv(p))?.documents(),
                );
                Ok(Corpus::from_documents(docs))
            }
            Self::Fixture(p) => Self::read(p, |p| load_fixture(p)),
            Self::Isot { real, fake } => {
                let c = load_isot(real, fake).stage("ingest")?;
                let counts = c.counts();
                let stats = c.stats();
                log(format!(
                    "ingested {} documents ({} real, {} fake); dropped {} empty rows and {} duplicates",
                    c.len(),
                    counts.real,
                    counts.fake,
                    stats.dropped_empty,
                    stats.dropped_duplicates
                ));
                Ok(c)
            }
        }
    }

    /// `(train, test)`: read from a split directory, else split with `spec`.
    pub fn halves(&self, spec: &SplitSpec) -> Result<(Corpus, Corpus), CliError> {
        match self {
            Self::SplitDir(d) => Ok((
                Self::read(&d.join(TRAIN_FILE), |p| load_labeled_csv(p))?,
                Self::read(&d.join(TEST_FILE), |p| load_labeled_csv(p))?,
            )),
            _ => {
                let all = self.load_all()?;
                let (train, test) = stratified_split(&all, spec).stage("split")?;
                log(format!("split: {} train, {} test", train.len(), test.len()));
                Ok((train, test))
            }
        }
    }
}
