//! Dataset directories: `manifest.json` plus one subdirectory per user
//! holding one FDS1 file per sample.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fds::{load_fds, write_fds};
use super::sample::{ManifestUser, UserDataset};
use crate::error::{config, Error, Result};
use crate::io_util::write_atomic;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    users: Vec<ManifestUser>,
}

pub fn write_dataset(dir: &Path, users: &[UserDataset]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for u in users {
        check_id(&u.user_id)?;
        let udir = dir.join(&u.user_id);
        fs::create_dir_all(&udir)?;
        for (k, s) in u.samples.iter().enumerate() {
            write_atomic(&udir.join(format!("{k:05}.fds")), &write_fds(s))?;
        }
    }
    let manifest = Manifest {
        users: users
            .iter()
            .map(|u| ManifestUser {
                user_id: u.user_id.clone(),
                wears_glasses: u.wears_glasses,
            })
            .collect(),
    };
    write_atomic(&dir.join(MANIFEST), &serde_json::to_vec_pretty(&manifest)?)
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(config(format!("user id `{id}` cannot name a directory")));
    }
    Ok(())
}

/// Loads every user listed in the manifest; sample files are read in
/// file-name order.
pub fn read_dataset(dir: &Path) -> Result<Vec<UserDataset>> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    let mut users = Vec::with_capacity(manifest.users.len());
    for m in manifest.users {
        check_id(&m.user_id)?;
        let udir = dir.join(&m.user_id);
        let mut files: Vec<_> = fs::read_dir(&udir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "fds"))
            .collect();
        files.sort();
        let mut samples = Vec::with_capacity(files.len());
        for f in files {
            let s = load_fds(&fs::read(&f)?).map_err(|e| Error::Stage {
                stage: format!("loading {}", f.display()),
                source: Box::new(e),
            })?;
            samples.push(s);
        }
        let user = UserDataset {
            user_id: m.user_id,
            samples,
            wears_glasses: m.wears_glasses,
        };
        user.validate()?;
        users.push(user);
    }
    Ok(users)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};

    #[test]
    fn directory_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_users: 4,
            mean_samples: 3.0,
            ..Default::default()
        };
        let users = synth_generate(&spec, 2).unwrap();
        write_dataset(tmp.path(), &users).unwrap();
        let back = read_dataset(tmp.path()).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in users.iter().zip(&back) {
            assert_eq!(a.user_id, b.user_id);
            assert_eq!(a.wears_glasses, b.wears_glasses);
            assert_eq!(a.len(), b.len());
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert_eq!(write_fds(x), write_fds(y));
            }
        }
    }

    #[test]
    fn rejects_path_like_ids() {
        assert!(check_id("../x").is_err());
        assert!(check_id("u001").is_ok());
    }
}
