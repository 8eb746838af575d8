#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "tmgan/audio.hpp"
#include "tmgan/checkpoint.hpp"
#include "tmgan/common.hpp"
#include "tmgan/discriminators.hpp"
#include "tmgan/framing.hpp"
#include "tmgan/generator.hpp"
#include "tmgan/losses.hpp"
#include "tmgan/optim.hpp"
#include "tmgan/trace.hpp"

namespace tmgan {

// ---------------------------------------------------------------------------
// Flat key=value training configuration.
// ---------------------------------------------------------------------------

struct TrainConfig {
    uint64_t seed = 1234;
    real_t lr_g = 1e-4;
    real_t lr_d = 5e-5;
    real_t beta1 = 0.9;
    real_t beta2 = 0.999;
    int64_t batch = 8;
    int64_t epochs = 1;
    int64_t max_steps = 0;  // 0: run epochs * steps_per_epoch
    real_t crop_seconds = 2.0;
    real_t loss_rate = 0.10;
    std::string burst_class = "mixed";
    real_t lambda_mse = 1.0;
    real_t lambda_spec = 0.5;
    real_t width_mult = 1.0;
    real_t disc_width_mult = 1.0;
    int64_t checkpoint_every = 100;
    real_t grad_clip = 5.0;
    int64_t vq_stages = 3;
    int64_t codebook_size = 512;
    real_t commit_beta = 0.25;
    int64_t lookahead = 2;
    int sample_rate = 16000;
    int frame_ms = 20;
    std::string optimizer = "radam";  // records the optimizer in use

    int64_t frame_samples() const { return samples_per_frame(sample_rate, frame_ms); }
    int64_t crop_frames() const {
        return std::max<int64_t>(1, int64_t(std::llround(crop_seconds * 1000.0 / frame_ms)));
    }
    int64_t crop_samples() const { return crop_frames() * frame_samples(); }

    GeneratorConfig gen_config() const {
        GeneratorConfig g;
        g.frame_samples = frame_samples();
        g.lookahead = lookahead;
        g.vq_stages = vq_stages;
        g.codebook_size = codebook_size;
        g.commit_beta = commit_beta;
        g.width_mult = width_mult;
        return g;
    }

    DiscriminatorConfig disc_config() const {
        DiscriminatorConfig d;
        d.width_mult = disc_width_mult;
        return d;
    }

    LossWeights weights() const { return {lambda_mse, lambda_spec}; }

    std::string to_text() const {
        std::ostringstream os;
        os << "seed=" << seed << "\n";
        os << "lr_g=" << lr_g << "\n";
        os << "lr_d=" << lr_d << "\n";
        os << "beta1=" << beta1 << "\n";
        os << "beta2=" << beta2 << "\n";
        os << "batch=" << batch << "\n";
        os << "epochs=" << epochs << "\n";
        os << "max_steps=" << max_steps << "\n";
        os << "crop_seconds=" << crop_seconds << "\n";
        os << "loss_rate=" << loss_rate << "\n";
        os << "burst_class=" << burst_class << "\n";
        os << "lambda_mse=" << lambda_mse << "\n";
        os << "lambda_spec=" << lambda_spec << "\n";
        os << "width_mult=" << width_mult << "\n";
        os << "disc_width_mult=" << disc_width_mult << "\n";
        os << "checkpoint_every=" << checkpoint_every << "\n";
        os << "grad_clip=" << grad_clip << "\n";
        os << "vq_stages=" << vq_stages << "\n";
        os << "codebook_size=" << codebook_size << "\n";
        os << "commit_beta=" << commit_beta << "\n";
        os << "lookahead=" << lookahead << "\n";
        os << "sample_rate=" << sample_rate << "\n";
        os << "frame_ms=" << frame_ms << "\n";
        os << "optimizer=" << optimizer << "\n";
        return os.str();
    }
};

inline TrainConfig parse_train_config(const std::string& text) {
    TrainConfig c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
            line.pop_back();
        size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        line = line.substr(start);
        size_t eq = line.find('=');
        TMGAN_CHECK(eq != std::string::npos, FormatError,
                    "config: missing '=' on line " + std::to_string(lineno));
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        try {
            if (key == "seed") c.seed = std::stoull(val);
            else if (key == "lr_g") c.lr_g = std::stod(val);
            else if (key == "lr_d") c.lr_d = std::stod(val);
            else if (key == "beta1") c.beta1 = std::stod(val);
            else if (key == "beta2") c.beta2 = std::stod(val);
            else if (key == "batch") c.batch = std::stoll(val);
            else if (key == "epochs") c.epochs = std::stoll(val);
            else if (key == "max_steps") c.max_steps = std::stoll(val);
            else if (key == "crop_seconds") c.crop_seconds = std::stod(val);
            else if (key == "loss_rate") c.loss_rate = std::stod(val);
            else if (key == "burst_class") c.burst_class = val;
            else if (key == "lambda_mse") c.lambda_mse = std::stod(val);
            else if (key == "lambda_spec") c.lambda_spec = std::stod(val);
            else if (key == "width_mult") c.width_mult = std::stod(val);
            else if (key == "disc_width_mult") c.disc_width_mult = std::stod(val);
            else if (key == "checkpoint_every") c.checkpoint_every = std::stoll(val);
            else if (key == "grad_clip") c.grad_clip = std::stod(val);
            else if (key == "vq_stages") c.vq_stages = std::stoll(val);
            else if (key == "codebook_size") c.codebook_size = std::stoll(val);
            else if (key == "commit_beta") c.commit_beta = std::stod(val);
            else if (key == "lookahead") c.lookahead = std::stoll(val);
            else if (key == "sample_rate") c.sample_rate = std::stoi(val);
            else if (key == "frame_ms") c.frame_ms = std::stoi(val);
            else if (key == "optimizer") c.optimizer = val;
            else throw ParamError("config: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw FormatError("config: bad value for '" + key + "'");
        } catch (const std::out_of_range&) {
            throw FormatError("config: out-of-range value for '" + key + "'");
        }
    }
    TMGAN_CHECK(c.batch >= 1, ParamError, "config: batch must be >= 1");
    TMGAN_CHECK(c.lr_g > 0 && c.lr_d > 0, ParamError, "config: learning rates must be positive");
    TMGAN_CHECK(c.optimizer == "radam", ParamError, "config: only 'radam' is implemented");
    parse_burst_class(c.burst_class);
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream f(path);
    TMGAN_CHECK(f.good(), FormatError, "config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_train_config(ss.str());
}

// ---------------------------------------------------------------------------
// Models bundle.
// ---------------------------------------------------------------------------

struct Models {
    std::unique_ptr<NestedUNetGenerator> gen;
    std::unique_ptr<MultiResolutionBank> bank;
    std::unique_ptr<ComplexSpectrumDiscriminator> spec_disc;

    static Models build(const TrainConfig& cfg) {
        Models m;
        m.gen = std::make_unique<NestedUNetGenerator>(cfg.gen_config(), cfg.seed);
        Rng rng_d(mix_seed(cfg.seed, 0xd15c));
        m.bank = std::make_unique<MultiResolutionBank>(cfg.disc_config(), rng_d);
        m.spec_disc = std::make_unique<ComplexSpectrumDiscriminator>(cfg.disc_config(), rng_d);
        return m;
    }

    std::vector<Param*> gen_params() { return collect_params(*gen); }

    std::vector<Param*> disc_params() {
        std::vector<Param*> out = collect_params(*bank);
        for (Param* p : collect_params(*spec_disc)) out.push_back(p);
        return out;
    }

    // Named parameters and buffers of everything, for checkpointing.
    std::vector<std::pair<std::string, Tensor*>> named_state() {
        std::vector<std::pair<std::string, Tensor*>> out;
        auto pv = [&](const std::string& n, Param& p) { out.emplace_back(n, &p.v); };
        auto bv = [&](const std::string& n, Tensor& t) { out.emplace_back(n, &t); };
        gen->visit("gen", pv, bv);
        bank->visit("bank", pv, bv);
        spec_disc->visit("spec", pv, bv);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Dataset and batching.
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<AudioClip> clips;
    std::vector<std::string> names;
};

inline Dataset load_dataset(const std::string& dir, const TrainConfig& cfg,
                            std::ostream* warnings = nullptr) {
    namespace fs = std::filesystem;
    TMGAN_CHECK(fs::is_directory(dir), ParamError, "dataset: not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav")
            paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    Dataset ds;
    for (const std::string& p : paths) {
        AudioClip clip = read_wav(p);
        TMGAN_CHECK(clip.sample_rate == cfg.sample_rate, FormatError,
                    "dataset: sample rate mismatch in " + p + " (resampling is out of scope)");
        if (clip.length() < cfg.crop_samples()) {
            if (warnings)
                (*warnings) << "warning: skipping " << p << " (shorter than crop)\n";
            continue;
        }
        ds.clips.push_back(std::move(clip));
        ds.names.push_back(p);
    }
    TMGAN_CHECK(!ds.clips.empty(), ParamError, "dataset: no usable clips in " + dir);
    return ds;
}

struct Batch {
    std::vector<FrameGrid> clean;
    std::vector<FrameGrid> traced;
    std::vector<LossTrace> traces;
    int64_t frames = 0;
};

// Deterministic in (cfg.seed, step): crops, trace seeds and clip choices are
// all derived from them.
inline Batch make_batch(const Dataset& ds, const TrainConfig& cfg, int64_t step) {
    Batch batch;
    batch.frames = cfg.crop_frames();
    int64_t n = cfg.frame_samples();
    int64_t crop = cfg.crop_samples();
    BurstClass bc = parse_burst_class(cfg.burst_class);
    for (int64_t b = 0; b < cfg.batch; ++b) {
        Rng rng(mix_seed(mix_seed(cfg.seed, uint64_t(step)), uint64_t(b)));
        const AudioClip& clip = ds.clips[size_t(rng.uniform_int(0, int64_t(ds.clips.size()) - 1))];
        int64_t off = rng.uniform_int(0, clip.length() - crop);
        FrameGrid grid;
        grid.frames = batch.frames;
        grid.frame_length = n;
        grid.samples.assign(clip.samples.begin() + off, clip.samples.begin() + off + crop);
        LossTrace trace =
            sample_trace(rng.u64(), batch.frames, bc, cfg.loss_rate, cfg.frame_ms);
        batch.traced.push_back(apply_trace(grid, trace));
        batch.clean.push_back(std::move(grid));
        batch.traces.push_back(std::move(trace));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// One adversarial step: discriminator update on L_D with detached generator
// output, then generator update on the full objective. Codebook EMA updates
// run inside the generator's training forward.
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor grids_to_wave(const std::vector<FrameGrid>& grids) {
    int64_t b_count = int64_t(grids.size());
    int64_t l = grids[0].frames * grids[0].frame_length;
    Tensor wave({b_count, 1, 1, l});
    for (int64_t b = 0; b < b_count; ++b)
        std::copy(grids[size_t(b)].samples.begin(), grids[size_t(b)].samples.end(),
                  wave.data() + b * l);
    return wave;
}

}  // namespace detail

inline LossReport train_step(Models& m, RAdam& opt_g, RAdam& opt_d, const SpectralLoss& sl,
                             const Batch& batch, const TrainConfig& cfg) {
    int64_t b_count = int64_t(batch.clean.size());
    int64_t f_count = batch.frames;
    int64_t n = cfg.frame_samples();
    int64_t l = f_count * n;
    Ctx train_ctx{true, true};

    // Generator forward (training: EMA codebook updates happen here).
    zero_grads(*m.gen);
    std::vector<const FrameGrid*> traced_ptrs;
    for (const FrameGrid& g : batch.traced) traced_ptrs.push_back(&g);
    Tensor ctx_in = build_context(traced_ptrs, cfg.lookahead);
    NestedUNetGenerator::CoreOut gen_out =
        m.gen->forward_core(ctx_in, b_count, f_count, train_ctx);
    Tensor wave_fake = gen_out.y.reshaped({b_count, 1, 1, l});
    Tensor wave_real = detail::grids_to_wave(batch.clean);

    // -------- Discriminator phase (generator detached) --------
    auto disc_forward = [&](const Tensor& wave, Ctx ctx) {
        std::vector<Tensor> maps;
        maps.push_back(m.spec_disc->forward(wave, ctx));  // k = 0
        for (Tensor& t : m.bank->forward(wave, ctx)) maps.push_back(std::move(t));
        return maps;
    };

    zero_grads(*m.bank);
    zero_grads(*m.spec_disc);
    std::vector<Tensor> real_maps = disc_forward(wave_real, train_ctx);
    std::vector<Tensor> fake_maps = disc_forward(wave_fake, train_ctx);
    RelativisticMeans rm = relativistic_means(real_maps, fake_maps, b_count);
    real_t adv_d = disc_loss(rm);
    ScoreGrads sg = disc_loss_grads(rm);
    std::vector<Tensor> real_gmaps = scatter_score_grads(real_maps, sg.real, b_count);
    std::vector<Tensor> fake_gmaps = scatter_score_grads(fake_maps, sg.fake, b_count);
    // LIFO: fake branch cached last, release it first.
    m.spec_disc->backward(fake_gmaps[0]);
    m.bank->backward({fake_gmaps[1], fake_gmaps[2], fake_gmaps[3]});
    m.spec_disc->backward(real_gmaps[0]);
    m.bank->backward({real_gmaps[1], real_gmaps[2], real_gmaps[3]});
    std::vector<Param*> dparams = m.disc_params();
    clip_grad_norm(dparams, cfg.grad_clip);
    opt_d.step();

    // -------- Generator phase (updated discriminators) --------
    zero_grads(*m.bank);
    zero_grads(*m.spec_disc);
    Ctx value_ctx{false, true};
    std::vector<Tensor> real_maps2 = disc_forward(wave_real, value_ctx);
    std::vector<Tensor> fake_maps2 = disc_forward(wave_fake, train_ctx);
    RelativisticMeans rm2 = relativistic_means(real_maps2, fake_maps2, b_count);
    real_t adv_g = gen_adv_loss(rm2);
    ScoreGrads gg = gen_adv_loss_grads(rm2);
    std::vector<Tensor> fake_gmaps2 = scatter_score_grads(fake_maps2, gg.fake, b_count);
    Tensor g_wave = m.spec_disc->backward(fake_gmaps2[0]);
    g_wave.add(m.bank->backward({fake_gmaps2[1], fake_gmaps2[2], fake_gmaps2[3]}));

    LossWeights w = cfg.weights();
    real_t mse = 0.0;
    {
        // Mean over every sample in the batch; gradient folds in lambda_mse.
        real_t inv = 1.0 / real_t(b_count * l);
        for (int64_t i = 0; i < b_count * l; ++i) {
            real_t d = wave_fake[i] - wave_real[i];
            mse += d * d * inv;
            g_wave[i] += w.mse * 2.0 * d * inv;
        }
    }
    real_t spec = 0.0;
    for (int64_t b = 0; b < b_count; ++b) {
        spec += sl(wave_real.data() + b * l, wave_fake.data() + b * l, l,
                   g_wave.data() + b * l, w.spec / real_t(b_count)) /
                real_t(b_count);
    }

    m.gen->backward_core(g_wave.reshaped({b_count * f_count, 1, 1, n}), 1.0);
    std::vector<Param*> gparams = m.gen_params();
    clip_grad_norm(gparams, cfg.grad_clip);
    opt_g.step();

    LossReport report = make_report(adv_d, adv_g, mse, spec, gen_out.vq_commit, w);
    if (!report.all_finite()) throw NanError("train_step: non-finite loss");
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoint plumbing for the Models bundle.
// ---------------------------------------------------------------------------

inline CheckpointData snapshot(Models& m, RAdam& opt_g, RAdam& opt_d, uint64_t step,
                               const std::string& config_text) {
    CheckpointData data;
    data.step = step;
    data.config_text = config_text;
    for (auto& [name, t] : m.named_state()) data.tensors.emplace_back(name, *t);
    opt_g.save_state(data.opt_g);
    opt_d.save_state(data.opt_d);
    return data;
}

inline void restore(Models& m, RAdam* opt_g, RAdam* opt_d, const CheckpointData& data) {
    std::map<std::string, const Tensor*> lookup;
    for (const auto& [name, t] : data.tensors) lookup[name] = &t;
    auto state = m.named_state();
    TMGAN_CHECK(state.size() == data.tensors.size(), CheckpointError,
                "restore: tensor count mismatch (incompatible config?)");
    for (auto& [name, t] : state) {
        auto it = lookup.find(name);
        TMGAN_CHECK(it != lookup.end(), CheckpointError, "restore: missing tensor " + name);
        TMGAN_CHECK(it->second->shape() == t->shape(), CheckpointError,
                    "restore: shape mismatch for " + name);
        *t = *it->second;
    }
    m.gen->gvq().sync_after_load();
    if (opt_g && !data.opt_g.empty()) {
        size_t pos = 0;
        opt_g->load_state(data.opt_g, pos);
        TMGAN_CHECK(pos == data.opt_g.size(), CheckpointError, "restore: opt_g size mismatch");
    }
    if (opt_d && !data.opt_d.empty()) {
        size_t pos = 0;
        opt_d->load_state(data.opt_d, pos);
        TMGAN_CHECK(pos == data.opt_d.size(), CheckpointError, "restore: opt_d size mismatch");
    }
}

// ---------------------------------------------------------------------------
// Full training run. Returns the path of the final checkpoint.
// ---------------------------------------------------------------------------

struct FitResult {
    std::string final_checkpoint;
    int64_t steps_run = 0;
};

inline FitResult fit(const TrainConfig& cfg_in, const std::string& data_dir,
                     const std::string& out_dir, const std::string& resume_path = "",
                     std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    TrainConfig cfg = cfg_in;
    uint64_t start_step = 0;
    CheckpointData resume_data;
    bool resuming = !resume_path.empty();
    if (resuming) {
        resume_data = load_checkpoint(resume_path);
        TrainConfig stored = parse_train_config(resume_data.config_text);
        // Model geometry comes from the stored config; run-length knobs from
        // the caller.
        stored.epochs = cfg_in.epochs;
        stored.max_steps = cfg_in.max_steps;
        stored.checkpoint_every = cfg_in.checkpoint_every;
        cfg = stored;
        start_step = resume_data.step;
    }

    fs::create_directories(out_dir);
    Models m = Models::build(cfg);
    RAdam opt_g(m.gen_params(), cfg.lr_g, cfg.beta1, cfg.beta2);
    RAdam opt_d(m.disc_params(), cfg.lr_d, cfg.beta1, cfg.beta2);
    if (resuming) restore(m, &opt_g, &opt_d, resume_data);

    Dataset ds = load_dataset(data_dir, cfg, log);
    int64_t steps_per_epoch = std::max<int64_t>(1, int64_t(ds.clips.size()) / cfg.batch);
    int64_t total = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * steps_per_epoch;
    TMGAN_CHECK(int64_t(start_step) <= total, ParamError,
                "fit: checkpoint already past requested steps");

    std::string csv_path = out_dir + "/losses.csv";
    std::ofstream csv;
    if (resuming && fs::exists(csv_path)) {
        csv.open(csv_path, std::ios::app);
    } else {
        csv.open(csv_path, std::ios::trunc);
        csv << LossReport::csv_header() << "\n";
    }
    TMGAN_CHECK(csv.good(), FormatError, "fit: cannot open " + csv_path);

    SpectralLoss sl;
    std::string config_text = cfg.to_text();
    FitResult result;
    for (int64_t step = int64_t(start_step); step < total; ++step) {
        Batch batch = make_batch(ds, cfg, step);
        LossReport report;
        try {
            report = train_step(m, opt_g, opt_d, sl, batch, cfg);
        } catch (const NanError&) {
            // Diagnostic dump of the offending batch, then propagate.
            std::string dump = out_dir + "/nan_batch_step" + std::to_string(step) + ".bin";
            std::ofstream df(dump, std::ios::binary | std::ios::trunc);
            for (const FrameGrid& g : batch.clean)
                df.write(reinterpret_cast<const char*>(g.samples.data()),
                         std::streamsize(g.samples.size() * sizeof(real_t)));
            for (const FrameGrid& g : batch.traced)
                df.write(reinterpret_cast<const char*>(g.samples.data()),
                         std::streamsize(g.samples.size() * sizeof(real_t)));
            throw;
        }
        csv << report.csv_row(step + 1) << "\n";
        csv.flush();
        ++result.steps_run;
        bool last = step + 1 == total;
        if (cfg.checkpoint_every > 0 &&
            ((step + 1) % cfg.checkpoint_every == 0 || last)) {
            char name[64];
            std::snprintf(name, sizeof(name), "/ckpt_%08lld.tmgn",
                          static_cast<long long>(step + 1));
            std::string path = out_dir + name;
            save_checkpoint(path, snapshot(m, opt_g, opt_d, uint64_t(step + 1), config_text));
            result.final_checkpoint = path;
            if (log) (*log) << "step " << (step + 1) << "/" << total
                            << " total_g=" << report.total_g << " ckpt=" << path << "\n";
        }
    }
    if (result.final_checkpoint.empty()) {
        std::string path = out_dir + "/ckpt_final.tmgn";
        save_checkpoint(path, snapshot(m, opt_g, opt_d, uint64_t(total), config_text));
        result.final_checkpoint = path;
    }
    return result;
}

}  // namespace tmgan
