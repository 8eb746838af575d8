// Command-line front end: simulate / train / conceal / evaluate / inspect.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "tmgan/tmgan.hpp"

namespace {

using namespace tmgan;

// Removes declared outputs unless released, so failures leave no partial
// files behind.
class OutputGuard {
public:
    void track(const std::string& path) { paths_.push_back(path); }
    void release() { paths_.clear(); }
    ~OutputGuard() {
        for (const std::string& p : paths_) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
    }

private:
    std::vector<std::string> paths_;
};

AudioClip read_wav_16k(const std::string& path) {
    AudioClip clip = read_wav(path);
    TMGAN_CHECK(clip.sample_rate == 16000, FormatError,
                path + ": expected 16 kHz audio (resampling is out of scope)");
    return clip;
}

// Deterministic 10 s test clip for the inspect command: two tones plus
// seeded noise.
AudioClip synth_test_clip() {
    AudioClip clip;
    clip.sample_rate = 16000;
    clip.samples.resize(160000);
    Rng rng(0x7e57c11d);
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        real_t t = real_t(i) / 16000.0;
        clip.samples[i] = 0.25 * std::sin(2.0 * M_PI * 220.0 * t) +
                          0.15 * std::sin(2.0 * M_PI * 1760.0 * t) + 0.05 * rng.normal();
        clip.samples[i] = std::clamp(clip.samples[i], real_t(-1.0), real_t(1.0));
    }
    return clip;
}

struct LoadedModel {
    TrainConfig cfg;
    Models models;
};

LoadedModel load_model(const std::string& ckpt_path) {
    CheckpointData data = load_checkpoint(ckpt_path);
    TrainConfig cfg = parse_train_config(data.config_text);
    LoadedModel lm{cfg, Models::build(cfg)};
    restore(lm.models, nullptr, nullptr, data);
    return lm;
}

int cmd_simulate(const std::string& in, const std::string& trace_out,
                 const std::string& cls, real_t loss_rate, uint64_t seed,
                 const std::string& out) {
    OutputGuard guard;
    AudioClip clip = read_wav_16k(in);
    int64_t n = samples_per_frame(clip.sample_rate, 20);
    FrameGrid grid = frame_signal(clip, n);
    LossTrace trace = sample_trace(seed, grid.frames, parse_burst_class(cls), loss_rate, 20);
    FrameGrid traced = apply_trace(grid, trace);
    AudioClip lossy = unframe(traced, clip.sample_rate);
    // The remainder past F*N never belongs to a packet; pass it through so a
    // loss-free run is bit-exact.
    lossy.samples.insert(lossy.samples.end(), clip.samples.begin() + grid.frames * n,
                         clip.samples.end());
    guard.track(trace_out);
    guard.track(out);
    write_trace(trace_out, trace);
    write_wav(out, lossy);
    guard.release();
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir, const std::string& resume) {
    TrainConfig cfg = load_train_config(config_path);
    FitResult res = fit(cfg, data_dir, out_dir, resume, &std::cerr);
    std::cout << "final checkpoint: " << res.final_checkpoint << "\n";
    return 0;
}

int cmd_conceal(const std::string& model, const std::string& in, const std::string& trace_path,
                const std::string& out, bool streaming, bool no_splice) {
    OutputGuard guard;
    LoadedModel lm = load_model(model);
    AudioClip lossy = read_wav_16k(in);
    LossTrace trace = read_trace(trace_path);
    TMGAN_CHECK(trace.frame_length_ms == lm.cfg.frame_ms, FormatError,
                "conceal: trace frame length does not match the model");
    int64_t n = lm.cfg.frame_samples();
    FrameGrid grid = frame_signal(lossy, n);
    bool splice = !no_splice;
    FrameGrid fixed = streaming ? streaming_conceal(*lm.models.gen, grid, trace, splice)
                                : generator_forward(*lm.models.gen, grid, trace, splice);
    AudioClip outclip = unframe(fixed, lossy.sample_rate);
    guard.track(out);
    write_wav(out, outclip);
    guard.release();
    return 0;
}

int cmd_evaluate(const std::string& ref_path, const std::string& est_path,
                 const std::string& trace_path, const std::string& report) {
    OutputGuard guard;
    AudioClip ref = read_wav_16k(ref_path);
    AudioClip est = read_wav_16k(est_path);
    LossTrace trace = read_trace(trace_path);
    int64_t len = std::min(ref.length(), est.length());
    TMGAN_CHECK(ref.length() == est.length(), LengthError,
                "evaluate: reference and estimate lengths differ");
    ref.samples.resize(size_t(len));
    est.samples.resize(size_t(len));
    EvalRow row;
    row.utterance = std::filesystem::path(est_path).stem().string();
    row.burst_class = classify_trace(trace);
    row.lsd_lost = lsd(ref, est, &trace);
    row.snr = region_snr(ref, est, trace);
    guard.track(report);
    write_eval_report(report, {row});
    guard.release();
    return 0;
}

int cmd_inspect(const std::string& model) {
    LoadedModel lm = load_model(model);
    NestedUNetGenerator& gen = *lm.models.gen;
    int64_t gen_params = count_params(gen);
    int64_t disc_params = count_params(*lm.models.bank) + count_params(*lm.models.spec_disc);
    CostReport cost = estimate_macs(gen.config(), lm.cfg.sample_rate);
    std::printf("generator parameters: %lld\n", static_cast<long long>(gen_params));
    std::printf("discriminator parameters: %lld\n", static_cast<long long>(disc_params));
    std::printf("generator MACs per 20 ms frame: %lld\n",
                static_cast<long long>(cost.macs_per_frame));
    std::printf("generator MACs per second: %lld (%.3f G/s)\n",
                static_cast<long long>(cost.macs_per_second),
                real_t(cost.macs_per_second) / 1e9);
    std::printf("per-layer MACs (per frame):\n");
    for (const LayerCost& lc : cost.layers)
        std::printf("  %-24s %lld\n", lc.name.c_str(), static_cast<long long>(lc.macs_per_frame));
    AudioClip clip = synth_test_clip();
    FrameGrid grid = frame_signal(clip, gen.config().frame_samples);
    LossTrace trace = sample_trace(7, grid.frames, BurstClass::Short, 0.10, lm.cfg.frame_ms);
    real_t rtf = measure_rtf(gen, clip, trace, 5);
    std::printf("RTF on bundled 10 s clip (median of 5): %.4f\n", rtf);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TMGAN packet-loss concealment"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "Sample a loss trace and zero-fill a clip");
    std::string sim_in, sim_trace_out, sim_class = "mixed", sim_out;
    double sim_rate = 0.10;
    uint64_t sim_seed = 1;
    sim->add_option("--in", sim_in, "clean input WAV")->required();
    sim->add_option("--trace-out", sim_trace_out, "output trace file")->required();
    sim->add_option("--class", sim_class, "burst class: short|mid|long|mixed");
    sim->add_option("--loss-rate", sim_rate, "target loss rate in [0,1)");
    sim->add_option("--seed", sim_seed, "trace seed");
    sim->add_option("--out", sim_out, "lossy output WAV")->required();

    auto* tr = app.add_subcommand("train", "Adversarial training");
    std::string tr_data, tr_cfg, tr_out, tr_resume;
    tr->add_option("--data", tr_data, "directory of 16 kHz mono WAVs")->required();
    tr->add_option("--config", tr_cfg, "key=value config file")->required();
    tr->add_option("--out", tr_out, "run directory")->required();
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");

    auto* co = app.add_subcommand("conceal", "Reconstruct lost frames");
    std::string co_model, co_in, co_trace, co_out;
    bool co_streaming = false, co_no_splice = false;
    co->add_option("--model", co_model, "checkpoint")->required();
    co->add_option("--in", co_in, "lossy WAV")->required();
    co->add_option("--trace", co_trace, "loss trace")->required();
    co->add_option("--out", co_out, "output WAV")->required();
    co->add_flag("--streaming", co_streaming, "frame-by-frame streaming mode");
    co->add_flag("--no-splice", co_no_splice, "keep raw generator output on received frames");

    auto* ev = app.add_subcommand("evaluate", "LSD and region-SNR report");
    std::string ev_ref, ev_est, ev_trace, ev_report;
    ev->add_option("--ref", ev_ref, "clean reference WAV")->required();
    ev->add_option("--est", ev_est, "estimate WAV")->required();
    ev->add_option("--trace", ev_trace, "loss trace")->required();
    ev->add_option("--report", ev_report, "output CSV")->required();

    auto* in = app.add_subcommand("inspect", "Model cost accounting");
    std::string in_model;
    in->add_option("--model", in_model, "checkpoint")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return cmd_simulate(sim_in, sim_trace_out, sim_class, sim_rate, sim_seed, sim_out);
        if (tr->parsed()) return cmd_train(tr_data, tr_cfg, tr_out, tr_resume);
        if (co->parsed())
            return cmd_conceal(co_model, co_in, co_trace, co_out, co_streaming, co_no_splice);
        if (ev->parsed()) return cmd_evaluate(ev_ref, ev_est, ev_trace, ev_report);
        if (in->parsed()) return cmd_inspect(in_model);
    } catch (const tmgan::NanError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const tmgan::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
