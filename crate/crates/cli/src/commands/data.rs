use std::path::Path;

use disparity_core::data::{gen_random_dot_stereogram, save_disparity, save_image, DisparityField, Manifest, ManifestEntry};

use super::create_dir;
use crate::error::CliResult;
use crate::manifest::RunManifest;

pub struct GenArgs {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub max_disparity: f64,
    pub constant: Option<f64>,
    pub objects: usize,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn gen(a: &GenArgs, out: &Path, argv: &[String]) -> CliResult<()> {
    let mut manifest = RunManifest::start("gen-data", argv);
    let field = match a.constant {
        Some(d) => DisparityField::Constant(d),
        None => DisparityField::Layered {
            min: 0.0,
            max: a.max_disparity,
            objects: a.objects,
        },
    };
    create_dir(out)?;
    let mut list = Manifest::default();
    for i in 0..a.n {
        let seed = a.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let s = gen_random_dot_stereogram(a.height, a.width, &field, seed)?;
        let entry = ManifestEntry {
            left: out.join(format!("{i:05}_left.png")),
            right: out.join(format!("{i:05}_right.png")),
            gt: Some(out.join(format!("{i:05}_disp.pfm"))),
        };
        save_image(&entry.left, &s.left)?;
        save_image(&entry.right, &s.right)?;
        save_disparity(entry.gt.as_ref().expect("set above"), s.gt.as_ref().expect("generated with gt"))?;
        manifest.outputs.extend([entry.left.clone(), entry.right.clone()]);
        manifest.outputs.extend(entry.gt.clone());
        list.entries.push(entry);
    }
    let mpath = out.join(MANIFEST_FILE);
    std::fs::write(&mpath, list.to_text(out))?;
    manifest.outputs.push(mpath);
    manifest.seed = Some(a.seed);
    manifest.write(&out.join("run.json"))
}
