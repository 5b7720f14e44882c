//! Scripted two-cycle run: prints the trace, then checks every cycle
//! boundary against the slow-path oracle. Mirrors the README example.

use minseek::controller::{run_generation, GenerationOptions, MaxRc, ScalingPolicy, Variant};
use minseek::{Model, ModelConfig, ScriptSpec, verify_boundaries};

fn main() -> minseek::Result<()> {
    let model = Model::from_seed(ModelConfig::toy(), 7)?;
    let policy = ScalingPolicy::min_seek(Variant::Two, MaxRc::Bounded(2));
    let spec = ScriptSpec::parse(
        "script v1\nthought 6 end\nthought 9 end\nthought 7 end\nanswer 5 eos\n",
    )?;
    let prompt = minseek::controller::default_prompt(&model.config, 4);

    let outcome = run_generation(&model, &prompt, policy, GenerationOptions::scripted(spec))?;
    print!("{}", outcome.trace_text());

    for report in verify_boundaries(&model, &outcome)? {
        assert!(report.within_tolerance());
    }
    Ok(())
}
