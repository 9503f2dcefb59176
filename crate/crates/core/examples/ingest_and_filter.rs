//! Load a run table, restrict ConvNeXt/ViT runs to the full-data regimes, and
//! average repeated seeds before fitting.
//!
//! `cargo run --example ingest_and_filter`

use scalefit::records::{filter_for_fit, FilterRule, RunTable, Target};

const RUNS: &str = "\
run_id,family,arch,dataset,samples_per_class,seed,n_params,samples_seen,flops,score_v1,score_v2,score_v4,score_it,score_behavior
r1,ResNet,resnet18,imagenet,full,0,11000000,128000000,8.4e15,0.52,0.41,0.44,0.38,0.30
r2,ResNet,resnet18,imagenet,full,1,11000000,128000000,8.4e15,0.50,0.43,0.46,0.40,0.32
r3,ViT,vit_s,imagenet,10,0,22000000,1000000,1.3e14,0.35,0.30,0.31,0.25,0.12
r4,ViT,vit_s,imagenet,300,0,22000000,30000000,4.0e15,0.45,0.37,0.40,0.34,0.26
r5,ConvNeXt,convnext_t,imagenet,full,0,28000000,128000000,2.1e16,0.55,0.44,0.48,0.42,0.36
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = RunTable::from_csv_reader(RUNS.as_bytes(), "inline")?;
    println!("ingested {} runs", table.len());

    let kept = filter_for_fit(&table, &FilterRule::convnext_vit_restricted());
    println!("after the ConvNeXt/ViT restriction: {} runs", kept.len());

    let averaged = kept.average_seeds();
    for r in &averaged.rows {
        let s = Target::Mean.score(r)?;
        println!(
            "{:<4} {:<9} C={:.2e}  S={:.3}  L={:.3}",
            r.run_id, r.family, r.flops, s.s, s.l
        );
    }

    let mut out = Vec::new();
    averaged.write_csv(&mut out)?;
    print!("{}", String::from_utf8(out)?);
    Ok(())
}
