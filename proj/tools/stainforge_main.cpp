// stainforge command-line driver: data preparation, prompt and model
// training, inference enhancement and evaluation. One subcommand per
// pipeline stage; every run writes a log with the exact config snapshot
// and seed beside its artifacts.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "stainforge/artifacts.hpp"
#include "stainforge/config.hpp"
#include "stainforge/data.hpp"
#include "stainforge/harbor.hpp"
#include "stainforge/metrics.hpp"
#include "stainforge/png_io.hpp"

namespace fs = std::filesystem;
using namespace stainforge;
using json = nlohmann::ordered_json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig load_run_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig{} : parse_config(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    return cfg;
}

void write_run_log(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                   const json& extra = json::object()) {
    const fs::path out_dir = dir.empty() ? fs::path(".") : dir;
    fs::create_directories(out_dir);
    json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["config"] = json::parse(config_to_json(cfg));
    if (!extra.empty()) j["result"] = extra;
    std::ofstream f(out_dir / (command + ".runlog.json"));
    f << j.dump(2) << "\n";
}

std::vector<ImagePatch> load_all_model_range(const PatchManifest& manifest, int domain,
                                             const std::string& split = "") {
    auto unit = load_domain_patches(manifest, domain, split);
    std::vector<ImagePatch> out;
    out.reserve(unit.size());
    for (auto& p : unit) {
        ImagePatch m = to_model_range(p);
        m.domain = p.domain;
        out.push_back(std::move(m));
    }
    return out;
}

int cmd_synth_data(std::uint64_t seed, int count, int size, const std::string& out) {
    auto manifest = synth_stain_dataset(seed, count, size, out);
    RunConfig cfg;
    cfg.seed = seed;
    write_run_log(out, "synth-data",
                  cfg, {{"patches", manifest.records.size()}, {"manifest", "manifest.tsv"}});
    std::cout << "wrote " << manifest.records.size() << " patches under " << out << "\n";
    return 0;
}

int cmd_prepare_data(const std::string& input_dir, const std::string& out, TilingSpec spec) {
    spec.validate();
    fs::create_directories(fs::path(out) / "patches");
    PatchManifest manifest;
    manifest.base_dir = out;
    std::vector<fs::path> slides;
    for (const auto& e : fs::directory_iterator(input_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") slides.push_back(e.path());
    std::sort(slides.begin(), slides.end());
    if (slides.empty()) throw InputError("prepare-data: no .png slides in " + input_dir);
    std::int64_t kept = 0;
    for (const auto& slide_path : slides) {
        ImagePatch slide = read_png(slide_path);
        const std::string slide_id = slide_path.stem().string();
        for (const auto& [patch, x, y] : extract_patches(slide, spec)) {
            char name[256];
            std::snprintf(name, sizeof(name), "patches/%s_x%d_y%d.png", slide_id.c_str(), x, y);
            write_png(fs::path(out) / name, patch);
            manifest.records.push_back({name, patch.domain.value_or(0), slide_id, x, y, "train"});
            ++kept;
        }
    }
    write_manifest(fs::path(out) / "manifest.tsv", manifest);
    RunConfig cfg;
    cfg.tiling = spec;
    write_run_log(out, "prepare-data", cfg, {{"patches", kept}, {"slides", slides.size()}});
    std::cout << "extracted " << kept << " patches from " << slides.size() << " slides\n";
    return 0;
}

int cmd_train_prompts(const CommonArgs& common, const std::string& data_dir,
                      const std::string& out_path) {
    RunConfig cfg = load_run_config(common);
    PatchManifest manifest = read_manifest(fs::path(data_dir) / "manifest.tsv");
    EncoderBackend backend = cfg.make_backend();

    const int source = cfg.source_stain();
    const int target = cfg.target_stain();
    // The synthetic dataset labels its two domains 0 and 1; fall back to
    // them when the configured stain pair is absent from the manifest.
    auto present = [&manifest](int domain) {
        for (const auto& r : manifest.records)
            if (r.domain == domain) return true;
        return false;
    };
    const int src = present(source) ? source : 0;
    const int tgt = present(target) ? target : 1;

    std::vector<LabeledEmbedding> data;
    for (const int domain : {src, tgt}) {
        for (auto& patch : load_all_model_range(manifest, domain, "train")) {
            LabeledEmbedding le;
            le.emb = encode_image(patch, backend);
            le.label = (domain == tgt) ? 1 : 0;
            data.push_back(std::move(le));
        }
    }
    PromptBank bank = train_contrastive_prompts(data, backend, cfg.prompt_train_options());
    const double acc = prompt_accuracy(data, bank, backend);
    save_prompt_bank(out_path, bank, config_to_json(cfg));
    {
        std::ofstream log(out_path + ".losslog.tsv");
        log << "step\tbce\n";
        log.precision(17);
        for (std::size_t i = 0; i < bank.loss_curve.size(); ++i)
            log << i << '\t' << bank.loss_curve[i] << '\n';
    }
    write_run_log(fs::path(out_path).parent_path(), "train-prompts", cfg,
                  {{"final_loss", bank.final_loss},
                   {"train_accuracy", acc},
                   {"steps", bank.steps_trained}});
    std::cout << "prompt bank: loss " << bank.final_loss << ", accuracy " << acc << " -> "
              << out_path << "\n";
    return 0;
}

int cmd_make_anchors(const CommonArgs& common, const std::string& concept_dir,
                     const std::string& out_path) {
    RunConfig cfg = load_run_config(common);
    EncoderBackend backend = cfg.make_backend();
    ConceptAnchorSet anchors = build_concept_anchors(concept_dir, backend);
    save_anchors(out_path, anchors, config_to_json(cfg));
    write_run_log(fs::path(out_path).parent_path(), "make-anchors", cfg,
                  {{"digest_constant", anchors.digests[0]}});
    std::cout << "anchors -> " << out_path << "\n";
    return 0;
}

int cmd_train_vpgan(const CommonArgs& common, const std::string& data_dir,
                    const std::string& bank_path, const std::string& anchors_path,
                    const std::string& out_path, bool pure_cyclegan) {
    RunConfig cfg = load_run_config(common);
    PatchManifest manifest = read_manifest(fs::path(data_dir) / "manifest.tsv");
    auto patches_a = load_all_model_range(manifest, 0, "train");
    auto patches_b = load_all_model_range(manifest, 1, "train");

    VpganTrainConfig tc = cfg.vpgan_train_config();
    EncoderBackend backend = cfg.make_backend();
    PromptBank bank;
    ConceptAnchorSet anchors;
    const PromptBank* bank_ptr = nullptr;
    const ConceptAnchorSet* anchors_ptr = nullptr;
    std::uint64_t bank_dig = 0, anchors_dig = 0;
    if (pure_cyclegan) {
        tc.weights.alpha = tc.weights.beta = tc.weights.gamma = 0.0;
    } else {
        bank = load_prompt_bank(bank_path);
        anchors = load_anchors(anchors_path);
        bank_ptr = &bank;
        anchors_ptr = &anchors;
        bank_dig = bank_digest(bank);
        anchors_dig = anchors_digest(anchors);
    }

    VpganTrainer trainer(std::move(patches_a), std::move(patches_b), bank_ptr, anchors_ptr,
                         pure_cyclegan ? nullptr : &backend, tc);
    const std::string cfg_json = config_to_json(cfg);
    trainer.run([&](int iter, const VpganTrainer& t) {
        const fs::path periodic =
            fs::path(out_path).parent_path() /
            (fs::path(out_path).stem().string() + "_iter" + std::to_string(iter) + ".ckpt");
        save_vpgan_checkpoint(periodic, t, cfg_json, bank_dig, anchors_dig);
    });
    save_vpgan_checkpoint(out_path, trainer, cfg_json, bank_dig, anchors_dig);

    // One machine-parseable line per optimization step.
    std::ofstream log(fs::path(out_path).string() + ".losslog.tsv");
    log << "iter\tadv_a\tadv_b\tcyc_a\tcyc_b\tcpt\tcca\ticr\tnormal\ttotal\n";
    log.precision(17);
    for (const auto& r : trainer.report().rows)
        log << r.iter << '\t' << r.adv_a << '\t' << r.adv_b << '\t' << r.cyc_a << '\t' << r.cyc_b
            << '\t' << r.cpt << '\t' << r.cca << '\t' << r.icr << '\t' << r.normal_total << '\t'
            << r.train_total << '\n';

    write_run_log(fs::path(out_path).parent_path(), "train-vpgan", cfg,
                  {{"iterations", trainer.iterations_done()},
                   {"final_total", trainer.report().rows.back().train_total},
                   {"pure_cyclegan", pure_cyclegan}});
    std::cout << "vpgan checkpoint -> " << out_path << "\n";
    return 0;
}

int cmd_translate(const std::string& input, const std::string& ckpt_path,
                  const std::string& out, const std::string& direction) {
    VpganCheckpoint ckpt = load_vpgan_checkpoint(ckpt_path);
    const Direction dir = direction == "ba" ? Direction::b_to_a : Direction::a_to_b;
    auto translate_one = [&](const fs::path& in_file, const fs::path& out_file) {
        ImagePatch unit = read_png(in_file);
        ImagePatch model = to_model_range(unit);
        ImagePatch out_img = translate(model, ckpt.pair, dir);
        write_png(out_file, to_unit_range(out_img));
    };
    if (fs::is_directory(input)) {
        fs::create_directories(out);
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(input))
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) translate_one(f, fs::path(out) / f.filename());
        std::cout << "translated " << files.size() << " patches -> " << out << "\n";
    } else {
        if (fs::path(out).has_parent_path())
            fs::create_directories(fs::path(out).parent_path());
        translate_one(input, out);
        std::cout << "translated " << input << " -> " << out << "\n";
    }
    return 0;
}

int cmd_train_diffusion(const CommonArgs& common, const std::string& data_dir,
                        const std::string& out_path) {
    RunConfig cfg = load_run_config(common);
    PatchManifest manifest = read_manifest(fs::path(data_dir) / "manifest.tsv");
    std::vector<ImagePatch> samples;
    for (int domain = 0; domain < 4; ++domain)
        for (auto& p : load_all_model_range(manifest, domain, "train"))
            samples.push_back(std::move(p));
    DiffusionTrainResult result = train_toy_diffusion(samples, cfg.diffusion_train_config());
    save_diffusion_checkpoint(out_path, result, cfg.diffusion.channels,
                              cfg.diffusion_train_config().seed, config_to_json(cfg));
    {
        std::ofstream log(out_path + ".losslog.tsv");
        log << "step\tnoise_mse\n";
        log.precision(17);
        for (std::size_t i = 0; i < result.loss_curve.size(); ++i)
            log << i << '\t' << result.loss_curve[i] << '\n';
    }
    write_run_log(fs::path(out_path).parent_path(), "train-diffusion", cfg,
                  {{"initial_loss", result.initial_loss}, {"final_loss", result.final_loss}});
    std::cout << "diffusion checkpoint -> " << out_path << " (loss " << result.initial_loss
              << " -> " << result.final_loss << ")\n";
    return 0;
}

int cmd_enhance(const CommonArgs& common, const std::string& input,
                const std::string& vpgan_ckpt, const std::string& diffusion_ckpt, double mu,
                double lambda, int steps, const std::string& out) {
    RunConfig cfg = load_run_config(common);
    if (mu >= 0.0) cfg.enhance.mu = mu;
    if (lambda >= 0.0) cfg.enhance.lambda = lambda;
    if (steps >= 0) cfg.enhance.steps = steps;

    VpganCheckpoint vckpt = load_vpgan_checkpoint(vpgan_ckpt);
    DiffusionCheckpoint dckpt = load_diffusion_checkpoint(diffusion_ckpt);
    EncoderBackend backend = cfg.make_backend();

    ImagePatch unit = read_png(input);
    ImagePatch i_pre = to_model_range(unit);
    i_pre.domain = cfg.source_stain();
    ImagePatch i_post = translate(i_pre, vckpt.pair, Direction::a_to_b);
    i_post.domain = cfg.target_stain();

    EnhanceOptimOptions options;
    options.steps = cfg.enhance.steps;
    options.step_size = cfg.enhance.step_size;
    EnhanceResult result =
        enhance_image(i_pre, i_post, StainDomainLabel(cfg.target_stain()), dckpt.predictor,
                      dckpt.schedule, backend, cfg.enhance_weights(), options);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_png(out, to_unit_range(result.image));
    write_run_log(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path(),
                  "enhance", cfg,
                  {{"objective_initial", result.objective_trace.front()},
                   {"objective_final", result.objective_trace.back()},
                   {"accepted_steps", result.objective_trace.size() - 1}});
    std::cout << "enhanced " << input << " -> " << out << " (objective "
              << result.objective_trace.front() << " -> " << result.objective_trace.back()
              << ")\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::string& pred_dir,
                 const std::string& ref_dir, const std::string& metrics_csv, double data_range,
                 const std::string& report_path) {
    RunConfig cfg = load_run_config(common);
    std::vector<std::string> metric_names;
    std::string cur;
    for (char c : metrics_csv + ",") {
        if (c == ',') {
            if (!cur.empty()) metric_names.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    EncoderBackend backend = cfg.make_backend();
    MetricReport report = evaluate_pairset(pred_dir, ref_dir, metric_names, backend, data_range,
                                           config_to_json(cfg));
    const std::string text = report_to_json(report);
    if (report_path.empty()) {
        std::cout << text;
    } else {
        if (fs::path(report_path).has_parent_path())
            fs::create_directories(fs::path(report_path).parent_path());
        std::ofstream f(report_path);
        f << text;
        std::cout << "report -> " << report_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stainforge: prompt-guided unpaired virtual staining (desk scale)"};
    app.require_subcommand(1);

    CommonArgs common;

    auto add_common = [&common](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON run configuration");
        sub->add_option("--seed", common.seed, "master seed override")
            ->each([&common](const std::string&) { common.seed_set = true; });
    };

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate the seeded two-domain toy dataset");
    std::uint64_t synth_seed = 0;
    int synth_count = 50, synth_size = 64;
    std::string synth_out = "synth";
    synth->add_option("--seed", synth_seed, "dataset seed");
    synth->add_option("--count", synth_count, "structures per domain");
    synth->add_option("--size", synth_size, "patch side length");
    synth->add_option("--out", synth_out, "output directory")->required();

    // prepare-data
    auto* prep = app.add_subcommand("prepare-data", "tile slides into filtered patches");
    std::string prep_in, prep_out;
    TilingSpec prep_spec;
    std::string prep_stat = "mean";
    prep->add_option("--input-dir", prep_in, "directory of .png slides")->required();
    prep->add_option("--out", prep_out, "output directory")->required();
    prep->add_option("--patch-size", prep_spec.patch, "patch side (default 256)");
    prep->add_option("--overlap", prep_spec.overlap, "patch overlap (default 192)");
    prep->add_option("--sat-threshold", prep_spec.sat_threshold,
                     "background saturation threshold (default 15)");
    prep->add_option("--sat-stat", prep_stat, "saturation statistic: mean|max|median");

    // train-prompts
    auto* tp = app.add_subcommand("train-prompts", "train the contrastive prompt pair");
    std::string tp_data, tp_out = "prompts.ckpt";
    tp->add_option("--data", tp_data, "dataset directory (with manifest.tsv)")->required();
    tp->add_option("--out", tp_out, "prompt bank output path");
    add_common(tp);

    // make-anchors
    auto* ma = app.add_subcommand("make-anchors", "encode concept texts into anchors");
    std::string ma_dir, ma_out = "anchors.ckpt";
    ma->add_option("--concepts", ma_dir, "directory with constant/he/mas/pas/pasm .txt")
        ->required();
    ma->add_option("--out", ma_out, "anchor set output path");
    add_common(ma);

    // train-vpgan
    auto* tv = app.add_subcommand("train-vpgan", "train the prompt-guided translator");
    std::string tv_data, tv_bank = "prompts.ckpt", tv_anchors = "anchors.ckpt",
                tv_out = "vpgan.ckpt";
    bool tv_pure = false;
    tv->add_option("--data", tv_data, "dataset directory")->required();
    tv->add_option("--bank", tv_bank, "trained prompt bank");
    tv->add_option("--anchors", tv_anchors, "concept anchor set");
    tv->add_option("--out", tv_out, "checkpoint output path");
    tv->add_flag("--pure-cyclegan", tv_pure, "baseline run without prompt losses");
    add_common(tv);

    // translate
    auto* tr = app.add_subcommand("translate", "run a trained generator on patches");
    std::string tr_in, tr_ckpt, tr_out, tr_dir = "ab";
    tr->add_option("--input", tr_in, "input .png or directory")->required();
    tr->add_option("--vpgan-ckpt", tr_ckpt, "vpgan checkpoint")->required();
    tr->add_option("--out", tr_out, "output .png or directory")->required();
    tr->add_option("--direction", tr_dir, "ab (default) or ba");

    // train-diffusion
    auto* td = app.add_subcommand("train-diffusion", "train the toy conditional denoiser");
    std::string td_data, td_out = "diffusion.ckpt";
    td->add_option("--data", td_data, "dataset directory")->required();
    td->add_option("--out", td_out, "checkpoint output path");
    add_common(td);

    // enhance
    auto* en = app.add_subcommand("enhance", "DDIM inference enhancement of one patch");
    std::string en_in, en_vpgan, en_diff, en_out = "enhanced.png";
    double en_mu = -1.0, en_lambda = -1.0;
    int en_steps = -1;
    en->add_option("--input", en_in, "source-domain .png patch")->required();
    en->add_option("--vpgan-ckpt", en_vpgan, "vpgan checkpoint")->required();
    en->add_option("--diffusion-ckpt", en_diff, "diffusion checkpoint")->required();
    en->add_option("--mu", en_mu, "struct/style balance (overrides config)");
    en->add_option("--lambda", en_lambda, "calibration weight (overrides config)");
    en->add_option("--steps", en_steps, "prompt-map optimization steps");
    en->add_option("--out", en_out, "output .png");
    add_common(en);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "metric report over name-aligned directories");
    std::string ev_pred, ev_ref, ev_metrics = "ssim,css,msssim,psnr,fid", ev_report;
    double ev_range = 1.0;
    ev->add_option("--pred-dir", ev_pred, "predictions directory")->required();
    ev->add_option("--ref-dir", ev_ref, "references directory")->required();
    ev->add_option("--metrics", ev_metrics, "comma list: ssim,css,msssim,psnr,fid");
    ev->add_option("--data-range", ev_range, "declared value range (default 1.0)");
    ev->add_option("--report", ev_report, "report output path (stdout when omitted)");
    add_common(ev);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }

    try {
        if (*synth) return cmd_synth_data(synth_seed, synth_count, synth_size, synth_out);
        if (*prep) {
            prep_spec.stat = saturation_stat_from_string(prep_stat);
            return cmd_prepare_data(prep_in, prep_out, prep_spec);
        }
        if (*tp) return cmd_train_prompts(common, tp_data, tp_out);
        if (*ma) return cmd_make_anchors(common, ma_dir, ma_out);
        if (*tv) return cmd_train_vpgan(common, tv_data, tv_bank, tv_anchors, tv_out, tv_pure);
        if (*tr) return cmd_translate(tr_in, tr_ckpt, tr_out, tr_dir);
        if (*td) return cmd_train_diffusion(common, td_data, td_out);
        if (*en)
            return cmd_enhance(common, en_in, en_vpgan, en_diff, en_mu, en_lambda, en_steps,
                               en_out);
        if (*ev) return cmd_evaluate(common, ev_pred, ev_ref, ev_metrics, ev_range, ev_report);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
