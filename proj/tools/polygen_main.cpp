#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "polygen/core.hpp"
#include "polygen/errors.hpp"
#include "polygen/kernels.hpp"
#include "polygen/lab.hpp"
#include "polygen/losses.hpp"
#include "polygen/manifest.hpp"
#include "polygen/metrics.hpp"
#include "polygen/rng.hpp"
#include "polygen/sampler.hpp"
#include "polygen/scheduler.hpp"
#include "polygen/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace polygen;

namespace {

int dispatch(std::vector<std::string> args);

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open " + p.string() + " for writing");
    return f;
}

void close_out(std::ofstream& f, const fs::path& p) {
    f.flush();
    if (!f) throw IoError("failed writing " + p.string());
}

void write_json(const json& j, const fs::path& p) {
    auto f = open_out(p);
    f << j.dump(2) << '\n';
    close_out(f, p);
}

std::string read_text_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    std::string s = ss.str();
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

fs::path ensure_out_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
    return dir;
}

// Collects provenance while a handler runs and serializes it on finish().
struct ManifestSink {
    RunManifest m;
    fs::path dir;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    ManifestSink(std::string subcommand, std::vector<std::string> argv, fs::path out_dir)
        : dir(std::move(out_dir)) {
        m.subcommand = std::move(subcommand);
        m.argv = std::move(argv);
    }

    void flag(const std::string& k, const std::string& v) { m.flags[k] = v; }
    void flag(const std::string& k, double v) { m.flags[k] = fmt_g(v); }
    void flag(const std::string& k, std::uint64_t v) { m.flags[k] = std::to_string(v); }

    void finish() {
        m.wall_clock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        save_manifest(m, dir / "run_manifest.json");
    }
};

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t count = std::min(threads, n);
    pool.reserve(count);
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
    std::string images, texts, captions, out;
    std::size_t clusters = 0;  // 0 picks min(1000, caption count)
    std::uint64_t seed = 0;
    double w = 100.0;
};

int run_metrics(const MetricsArgs& a, const std::vector<std::string>& argv) {
    const fs::path dir = ensure_out_dir(a.out);
    ManifestSink sink("metrics", argv, dir);

    EmbeddingMatrix imgs = load_embeddings(a.images, true);
    EmbeddingMatrix txts = load_embeddings(a.texts, true);
    sink.m.inputs = {a.images, a.texts};

    std::vector<std::size_t> img_to_caption(imgs.rows);
    if (!imgs.ids.empty() && !txts.ids.empty()) {
        std::unordered_map<std::string, std::size_t> row_of;
        for (std::size_t j = 0; j < txts.rows; ++j) {
            if (!row_of.emplace(txts.ids[j], j).second) {
                throw ValidationError("duplicate caption id '" + txts.ids[j] + "' in " + a.texts);
            }
        }
        for (std::size_t i = 0; i < imgs.rows; ++i) {
            auto it = row_of.find(imgs.ids[i]);
            if (it == row_of.end()) {
                throw ValidationError("image row " + std::to_string(i) + " references caption '" +
                                      imgs.ids[i] + "' which is not in " + a.texts);
            }
            img_to_caption[i] = it->second;
        }
    } else {
        if (imgs.rows != txts.rows) {
            throw ValidationError(
                "row counts differ and id-based pairing needs .ids sidecars on both files");
        }
        for (std::size_t i = 0; i < imgs.rows; ++i) img_to_caption[i] = i;
    }

    if (!a.captions.empty()) {
        const auto records = load_captions(a.captions);
        sink.m.inputs.push_back(a.captions);
        std::unordered_set<std::string> known;
        for (const auto& r : records) known.insert(r.id);
        if (!txts.ids.empty()) {
            for (const auto& id : txts.ids) {
                if (!known.count(id)) {
                    throw ValidationError("caption id '" + id + "' missing from " + a.captions);
                }
            }
        }
    }

    EmbeddingMatrix aligned(imgs.rows, txts.dim);
    for (std::size_t i = 0; i < imgs.rows; ++i) {
        std::copy(txts.row(img_to_caption[i]), txts.row(img_to_caption[i]) + txts.dim,
                  aligned.row(i));
    }
    aligned.normalized = txts.normalized;

    const double recog = recognizability(imgs, aligned, a.w);
    const std::size_t k = a.clusters > 0 ? a.clusters : std::min<std::size_t>(1000, txts.rows);
    ClusterModel model = kmeans_fit(txts, k, a.seed);
    const double div = diversity(imgs, model, img_to_caption);
    const auto spreads = cluster_spreads(imgs, model, img_to_caption);

    std::vector<std::size_t> caption_sizes(model.k, 0), image_sizes(model.k, 0);
    for (std::size_t c : model.assignment) ++caption_sizes[c];
    for (std::size_t i = 0; i < imgs.rows; ++i) ++image_sizes[model.assignment[img_to_caption[i]]];
    std::size_t used = 0;
    for (std::size_t c = 0; c < model.k; ++c) used += image_sizes[c] > 0;

    json report;
    report["recognizability"] = recog;
    report["diversity"] = div;
    report["score_weight"] = a.w;
    report["clusters_requested"] = k;
    report["clusters_used"] = used;
    report["cluster_sizes"] = caption_sizes;
    report["kmeans_iterations"] = model.iterations;
    report["final_inertia"] = model.inertia_trace.empty() ? 0.0 : model.inertia_trace.back();
    write_json(report, dir / "report.json");

    auto csv = open_out(dir / "cluster_spreads.csv");
    csv << "cluster,captions,images,spread\n";
    for (std::size_t c = 0; c < model.k; ++c) {
        csv << c << ',' << caption_sizes[c] << ',' << image_sizes[c] << ',' << fmt_g(spreads[c])
            << '\n';
    }
    close_out(csv, dir / "cluster_spreads.csv");

    std::printf("recognizability %.6f  diversity %.6f  clusters %zu/%zu\n", recog, div, used, k);

    sink.flag("clusters", static_cast<std::uint64_t>(k));
    sink.flag("seed", a.seed);
    sink.flag("w", a.w);
    sink.m.seeds = {a.seed};
    sink.m.outputs = {"report.json", "cluster_spreads.csv"};
    sink.finish();
    return 0;
}

// ----------------------------------------------------------------- sample

struct SampleArgs {
    std::string captions, bank, templates, out;
    std::size_t threshold = 30;
    std::uint64_t seed = 0;
    std::size_t limit = 0;
    std::size_t generate = 0;
};

int run_sample(const SampleArgs& a, const std::vector<std::string>& argv) {
    const fs::path dir = ensure_out_dir(a.out);
    ManifestSink sink("sample", argv, dir);
    ConceptBank bank = load_concept_bank(a.bank);
    sink.m.inputs = {a.bank};
    sink.flag("threshold", static_cast<std::uint64_t>(a.threshold));
    sink.flag("seed", a.seed);
    sink.m.seeds = {a.seed};

    if (a.generate > 0) {
        const fs::path tdir(a.templates);
        const std::string base_tmpl = read_text_file(tdir / "base_caption.txt");
        const std::string hn_tmpl = read_text_file(tdir / "hard_negative.txt");
        sink.m.inputs.push_back((tdir / "base_caption.txt").string());
        sink.m.inputs.push_back((tdir / "hard_negative.txt").string());

        const AxisSet axes = default_axes();
        Rng rng(a.seed);
        std::vector<CaptionRecord> records;
        records.reserve(2 * a.generate);
        for (std::size_t i = 0; i < a.generate; ++i) {
            const ControlTuple t = sample_control_tuple(bank, axes, rng);
            CaptionRecord base;
            base.id = "gen-" + std::to_string(i);
            base.text = render_prompt(base_tmpl, t.concept_name, t.axis);
            base.concept_name = t.concept_name;
            CaptionRecord hn;
            hn.id = base.id + "-hn";
            hn.text = render_prompt(hn_tmpl, t.concept_name, t.axis, base.text);
            hn.concept_name = t.concept_name;
            hn.axis = t.axis;
            hn.hn_of = base.id;
            records.push_back(std::move(base));
            records.push_back(std::move(hn));
        }
        save_captions(records, dir / "prompts.jsonl");

        json summary;
        summary["pairs"] = a.generate;
        summary["records"] = records.size();
        write_json(summary, dir / "summary.json");
        std::printf("generated %zu prompt pairs\n", a.generate);

        sink.flag("generate", static_cast<std::uint64_t>(a.generate));
        sink.m.outputs = {"prompts.jsonl", "summary.json"};
        sink.finish();
        return 0;
    }

    const auto loaded = load_captions(a.captions);
    sink.m.inputs.push_back(a.captions);
    const auto deduped = deduplicate(loaded);
    const ConceptHistogram before = count_concepts(deduped, bank);
    SamplerConfig cfg;
    cfg.threshold = a.threshold;
    cfg.seed = a.seed;
    auto retained = balanced_sample(deduped, before, cfg);

    // Hard negatives only make sense next to their base caption; the balance
    // and limit passes treat records independently, so re-anchor afterwards.
    auto drop_orphans = [](std::vector<CaptionRecord>& records) {
        std::unordered_set<std::string> bases;
        for (const auto& r : records) {
            if (!r.hn_of) bases.insert(r.id);
        }
        std::erase_if(records,
                      [&](const CaptionRecord& r) { return r.hn_of && !bases.count(*r.hn_of); });
    };
    drop_orphans(retained);
    const std::size_t balanced_count = retained.size();

    if (a.limit > 0 && retained.size() > a.limit) {
        std::vector<std::size_t> order(retained.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng sub(mix_seed(a.seed, 0x11517));
        sub.shuffle(order);
        order.resize(a.limit);
        std::sort(order.begin(), order.end());
        std::vector<CaptionRecord> cut;
        cut.reserve(a.limit);
        for (std::size_t i : order) cut.push_back(std::move(retained[i]));
        retained = std::move(cut);
        drop_orphans(retained);
    }
    const ConceptHistogram after = count_concepts(retained, bank);
    save_captions(retained, dir / "retained.jsonl");

    auto csv = open_out(dir / "concept_counts.csv");
    csv << "concept,before,after\n";
    for (const auto& [name, count] : before) {
        csv << name << ',' << count << ',' << after.at(name) << '\n';
    }
    close_out(csv, dir / "concept_counts.csv");

    json summary;
    summary["loaded"] = loaded.size();
    summary["after_dedup"] = deduped.size();
    summary["after_balance"] = balanced_count;
    summary["retained"] = retained.size();
    summary["threshold"] = a.threshold;
    summary["limit"] = a.limit;
    write_json(summary, dir / "summary.json");
    std::printf("loaded %zu  dedup %zu  balanced %zu  retained %zu\n", loaded.size(),
                deduped.size(), balanced_count, retained.size());

    if (a.limit > 0) sink.flag("limit", static_cast<std::uint64_t>(a.limit));
    sink.m.outputs = {"retained.jsonl", "concept_counts.csv", "summary.json"};
    sink.finish();
    return 0;
}

// ----------------------------------------------------------- schedule-sim

struct ScheduleArgs {
    std::size_t samples = 0;
    std::size_t batch = 0;
    std::size_t epochs = 40;
    double p_start = 0.0;
    double p_end = 0.5;
    double hn_share = 1.0;
    std::uint64_t seed = 0;
    std::string out;
};

int run_schedule_sim(const ScheduleArgs& a, const std::vector<std::string>& argv) {
    if (a.hn_share < 0.0 || a.hn_share > 1.0) {
        throw ValidationError("--hn-share must lie in [0, 1]");
    }
    const fs::path dir = ensure_out_dir(a.out);
    ManifestSink sink("schedule-sim", argv, dir);

    std::vector<PairedSample> dataset(a.samples);
    const std::size_t with_hn = static_cast<std::size_t>(std::llround(
        a.hn_share * static_cast<double>(a.samples)));
    for (std::size_t i = 0; i < a.samples; ++i) {
        dataset[i].base.id = "s" + std::to_string(i);
        if (i < with_hn) {
            CaptionRecord hn;
            hn.id = dataset[i].base.id + "-hn";
            hn.hn_of = dataset[i].base.id;
            dataset[i].negative = std::move(hn);
        }
    }

    CurriculumSchedule sched{a.p_start, a.p_end, a.epochs};
    LeftoverQueue queue;
    std::vector<BatchPlan> all;
    auto plans_csv = open_out(dir / "realized_p.csv");
    plans_csv << "epoch,scheduled_p,realized_p\n";
    auto plans_jsonl = open_out(dir / "plans.jsonl");
    for (std::size_t e = 0; e < a.epochs; ++e) {
        auto plans = plan_epoch(dataset, sched, e, a.batch, a.seed, queue);
        plans_csv << e << ',' << fmt_g(schedule_p(sched, e)) << ','
                  << fmt_g(realized_hn_fraction(plans)) << '\n';
        for (const auto& p : plans) {
            json line;
            line["epoch"] = p.epoch;
            line["step"] = p.step;
            line["positives"] = p.positive_ids;
            line["negatives"] = p.hn_ids;
            plans_jsonl << line.dump() << '\n';
        }
        all.insert(all.end(), std::make_move_iterator(plans.begin()),
                   std::make_move_iterator(plans.end()));
    }
    close_out(plans_csv, dir / "realized_p.csv");
    close_out(plans_jsonl, dir / "plans.jsonl");

    const UtilizationReport util = utilization_report(all, dataset, queue);
    auto util_jsonl = open_out(dir / "utilization.jsonl");
    for (const auto& s : dataset) {
        json line;
        line["id"] = s.base.id;
        line["positive_count"] = util.positive_counts.at(s.base.id);
        line["hn_count"] = s.negative ? util.hn_counts.at(s.negative->id) : 0;
        util_jsonl << line.dump() << '\n';
    }
    close_out(util_jsonl, dir / "utilization.jsonl");

    json summary;
    summary["samples"] = a.samples;
    summary["epochs"] = a.epochs;
    summary["batches"] = all.size();
    summary["end_queue_depth"] = util.end_queue_depth;
    write_json(summary, dir / "summary.json");
    std::printf("%zu epochs, %zu batches, end queue depth %zu\n", a.epochs, all.size(),
                util.end_queue_depth);

    sink.flag("samples", static_cast<std::uint64_t>(a.samples));
    sink.flag("batch", static_cast<std::uint64_t>(a.batch));
    sink.flag("epochs", static_cast<std::uint64_t>(a.epochs));
    sink.flag("p-start", a.p_start);
    sink.flag("p-end", a.p_end);
    sink.flag("hn-share", a.hn_share);
    sink.flag("seed", a.seed);
    sink.m.seeds = {a.seed};
    sink.m.outputs = {"plans.jsonl", "realized_p.csv", "utilization.jsonl", "summary.json"};
    sink.finish();
    return 0;
}

// ---------------------------------------------------------------- spectra

struct SpectraArgs {
    std::string images, out;
    std::size_t bins = 128;
    std::size_t threads = 1;
};

int run_spectra(const SpectraArgs& a, const std::vector<std::string>& argv) {
    const fs::path dir = ensure_out_dir(a.out);
    ManifestSink sink("spectra", argv, dir);

    const fs::path src(a.images);
    if (!fs::is_directory(src)) {
        throw ValidationError("--images must name a directory: " + a.images);
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(src)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".img1") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no image files (.pgm/.ppm/.pnm/.img1) in " + a.images);
    sink.m.inputs.push_back(a.images);

    std::vector<RadialProfile> profiles(files.size());
    std::vector<double> energies(files.size());
    parallel_for(files.size(), a.threads, [&](std::size_t i) {
        ImageGrid img = load_image(files[i].string());
        ImageGrid std_img = standardize(img);
        profiles[i] = radial_profile(std_img, a.bins);
        energies[i] = hf_energy(std_img);
    });

    const RadialProfile mean = mean_profile(profiles);
    auto prof_csv = open_out(dir / "profile.csv");
    prof_csv << "radius,magnitude\n";
    for (std::size_t b = 0; b < mean.radius.size(); ++b) {
        prof_csv << fmt_g(mean.radius[b]) << ',' << fmt_g(mean.magnitude[b]) << '\n';
    }
    close_out(prof_csv, dir / "profile.csv");

    auto en_csv = open_out(dir / "energies.csv");
    en_csv << "file,hf_energy\n";
    double total = 0.0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        en_csv << files[i].filename().string() << ',' << fmt_g(energies[i]) << '\n';
        total += energies[i];
    }
    close_out(en_csv, dir / "energies.csv");

    json summary;
    summary["images"] = files.size();
    summary["bins"] = a.bins;
    summary["mean_hf_energy"] = total / static_cast<double>(files.size());
    write_json(summary, dir / "summary.json");
    std::printf("%zu images, mean hf energy %.6f\n", files.size(),
                total / static_cast<double>(files.size()));

    sink.flag("bins", static_cast<std::uint64_t>(a.bins));
    sink.flag("threads", static_cast<std::uint64_t>(a.threads));
    sink.m.outputs = {"profile.csv", "energies.csv", "summary.json"};
    sink.finish();
    return 0;
}

// -------------------------------------------------------------- train-toy

struct TrainToyArgs {
    std::size_t concepts = 64, dim = 32, generators = 4, n_plus = 4, pairs = 200;
    double alpha = 0.5, sigma = 0.2, sigma_text = 0.05, hn_strength = 0.5;
    bool with_hn = true;
    std::uint64_t world_seed = 0;
    std::size_t epochs = 30, batch = 128, warmup = 1, runs = 1;
    double lr = 0.02, i2i_weight = 0.0, p_start = 0.0, p_end = 0.5;
    bool use_hn = false;
    bool hn_images = true;
    std::uint64_t seed = 0;
    std::string out;
};

int run_train_toy(const TrainToyArgs& a, const std::vector<std::string>& argv) {
    if (a.runs < 1) throw ValidationError("--runs must be at least 1");
    const fs::path dir = ensure_out_dir(a.out);
    ManifestSink sink("train-toy", argv, dir);

    SyntheticWorldConfig wc;
    wc.concepts = a.concepts;
    wc.dim = a.dim;
    wc.generators = a.generators;
    wc.alpha = a.alpha;
    wc.sigma = a.sigma;
    wc.sigma_text = a.sigma_text;
    wc.hn_strength = a.hn_strength;
    wc.n_plus = a.n_plus;
    wc.n_pairs = a.pairs;
    wc.with_hn = a.with_hn;
    wc.seed = a.world_seed;
    const World world = generate_world(wc);

    json report;
    report["world"] = {{"concepts", wc.concepts}, {"dim", wc.dim},
                       {"generators", wc.generators}, {"alpha", wc.alpha},
                       {"sigma", wc.sigma},           {"sigma_text", wc.sigma_text},
                       {"hn_strength", wc.hn_strength}, {"n_plus", wc.n_plus},
                       {"pairs", wc.n_pairs},         {"with_hn", wc.with_hn},
                       {"seed", wc.seed}};
    report["train"] = {{"epochs", a.epochs},   {"batch", a.batch},
                       {"lr", a.lr},           {"warmup", a.warmup},
                       {"i2i_weight", a.i2i_weight}, {"use_hn", a.use_hn},
                       {"hn_images", a.hn_images},   {"p_start", a.p_start},
                       {"p_end", a.p_end},     {"base_seed", a.seed},
                       {"runs", a.runs}};

    auto traces = open_out(dir / "traces.csv");
    traces << "seed,epoch,loss,realized_hn_fraction\n";
    json runs = json::array();
    for (std::size_t r = 0; r < a.runs; ++r) {
        ToyTrainConfig cfg;
        cfg.epochs = a.epochs;
        cfg.batch_size = a.batch;
        cfg.lr = a.lr;
        cfg.warmup_epochs = a.warmup;
        cfg.i2i_weight = a.i2i_weight;
        cfg.use_hn = a.use_hn;
        cfg.hn_images = a.hn_images;
        cfg.schedule = CurriculumSchedule{a.p_start, a.p_end, a.epochs};
        cfg.seed = a.seed + r;
        const TrainResult res = train_toy(world, cfg);
        const auto& rep = res.report;
        for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) {
            traces << cfg.seed << ',' << e << ',' << fmt_g(rep.epoch_loss[e]) << ','
                   << fmt_g(rep.realized_hn_ratio[e]) << '\n';
        }
        json one;
        one["seed"] = cfg.seed;
        one["final_loss"] = rep.epoch_loss.back();
        one["probe_valid"] = rep.probe_valid;
        one["probe_accuracy"] = rep.probe_accuracy;
        one["recall1"] = rep.recall1;
        one["recall5"] = rep.recall5;
        one["hn_discrimination"] = rep.hn_discrimination;
        runs.push_back(std::move(one));
        std::printf("seed %llu: loss %.4f probe %.4f recall@1 %.4f recall@5 %.4f disc %.4f\n",
                    static_cast<unsigned long long>(cfg.seed), rep.epoch_loss.back(),
                    rep.probe_accuracy, rep.recall1, rep.recall5, rep.hn_discrimination);
    }
    close_out(traces, dir / "traces.csv");
    report["runs"] = std::move(runs);
    write_json(report, dir / "report.json");

    sink.flag("seed", a.seed);
    sink.flag("world-seed", a.world_seed);
    sink.flag("runs", static_cast<std::uint64_t>(a.runs));
    sink.m.seeds = {a.seed, a.world_seed};
    sink.m.outputs = {"report.json", "traces.csv"};
    sink.finish();
    return 0;
}

// ------------------------------------------------------------ check-losses

BatchTensors random_check_batch(LossKind kind, Rng& rng) {
    const std::size_t d = 3 + rng.next_below(6);
    const std::size_t captions = 2 + rng.next_below(5);
    const bool grouped = kind == LossKind::multi_positive || kind == LossKind::image_to_image;
    const bool needs_hn_txt = kind == LossKind::nce_directional || kind == LossKind::negclip ||
                              kind == LossKind::tripletclip || kind == LossKind::clip_concat ||
                              kind == LossKind::hn_mixed;
    const bool needs_hn_img = kind == LossKind::tripletclip || kind == LossKind::clip_concat ||
                              kind == LossKind::hn_mixed;

    auto random_rows = [&](std::size_t n) {
        EmbeddingMatrix m(n, d);
        for (auto& v : m.data) v = rng.next_gaussian();
        return normalize_rows(m);
    };

    BatchTensors b;
    b.txt = random_rows(captions);
    if (grouped) {
        std::vector<std::size_t> group;
        for (std::size_t c = 0; c < captions; ++c) {
            const std::size_t n_imgs =
                (kind == LossKind::image_to_image ? 2 : 1) + rng.next_below(2);
            for (std::size_t k = 0; k < n_imgs; ++k) group.push_back(c);
        }
        b.img = random_rows(group.size());
        b.group = std::move(group);
    } else {
        b.img = random_rows(captions);
    }
    if (needs_hn_txt) b.hn_txt = random_rows(captions);
    if (needs_hn_img) b.hn_img = random_rows(captions);
    b.config.temperature = 0.05 + 0.2 * rng.next_double();
    return b;
}

int run_check_losses(std::uint64_t seed, const std::string& out,
                     const std::vector<std::string>& argv) {
    const LossKind kinds[] = {LossKind::multi_positive, LossKind::image_to_image,
                              LossKind::nce_directional, LossKind::negclip,
                              LossKind::tripletclip,     LossKind::clip_concat,
                              LossKind::hn_mixed};
    struct Row {
        const char* name;
        double max_rel = 0.0;
        std::size_t checked = 0, skipped = 0;
    };
    std::vector<Row> rows;
    bool all_ok = true;
    Rng rng(seed);
    for (LossKind kind : kinds) {
        Row row{loss_kind_name(kind)};
        for (int i = 0; i < 20; ++i) {
            BatchTensors b = random_check_batch(kind, rng);
            const GradCheckReport rep = check_gradients(kind, b);
            row.max_rel = std::max(row.max_rel, rep.max_rel_error);
            row.checked += rep.checked;
            row.skipped += rep.skipped;
        }
        const bool ok = row.max_rel < 1e-4;
        all_ok &= ok;
        std::printf("%-16s max_rel %.3e  coords %6zu (skipped %zu)  %s\n", row.name, row.max_rel,
                    row.checked, row.skipped, ok ? "ok" : "FAIL");
        rows.push_back(row);
    }

    if (!out.empty()) {
        const fs::path dir = ensure_out_dir(out);
        ManifestSink sink("check-losses", argv, dir);
        auto csv = open_out(dir / "gradcheck.csv");
        csv << "loss,max_rel_error,checked,skipped\n";
        for (const auto& r : rows) {
            csv << r.name << ',' << fmt_g(r.max_rel) << ',' << r.checked << ',' << r.skipped
                << '\n';
        }
        close_out(csv, dir / "gradcheck.csv");
        sink.flag("seed", seed);
        sink.m.seeds = {seed};
        sink.m.outputs = {"gradcheck.csv"};
        sink.finish();
    }
    return all_ok ? 0 : 1;
}

// --------------------------------------------------------------- delta-mtl

MetricVector load_metric_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    MetricVector mv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1) {
            if (line != "metric,value,orientation") {
                throw ValidationError(path + ":1: header must be metric,value,orientation");
            }
            continue;
        }
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos ||
            line.find(',', c2 + 1) != std::string::npos) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": expected exactly three comma-separated fields");
        }
        const std::string name = line.substr(0, c1);
        const std::string value = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string orient = line.substr(c2 + 1);
        if (name.empty()) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": empty metric name");
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != value.size() || value.empty()) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": bad value '" + value +
                                  "'");
        }
        int o = 0;
        if (orient == "higher") {
            o = 0;
        } else if (orient == "lower") {
            o = 1;
        } else {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": orientation must be 'higher' or 'lower', got '" + orient +
                                  "'");
        }
        mv.names.push_back(name);
        mv.values.push_back(v);
        mv.orientation.push_back(o);
    }
    if (mv.names.empty()) throw ValidationError(path + ": no metric rows");
    return mv;
}

int run_delta_mtl(const std::string& baseline, const std::string& model, const std::string& out,
                  const std::vector<std::string>& argv) {
    const MetricVector b = load_metric_csv(baseline);
    const MetricVector m = load_metric_csv(model);
    const double delta = delta_mtl(m, b);
    std::printf("%+.1f\n", delta);
    if (!out.empty()) {
        const fs::path dir = ensure_out_dir(out);
        ManifestSink sink("delta-mtl", argv, dir);
        sink.m.inputs = {baseline, model};
        json j;
        j["delta_pct"] = delta;
        write_json(j, dir / "delta.json");
        sink.m.outputs = {"delta.json"};
        sink.finish();
    }
    return 0;
}

// ------------------------------------------------------------- report-axes

int run_report_axes(const std::string& captions, const std::string& out,
                    const std::vector<std::string>& argv) {
    const AxisSet axes = default_axes();
    std::map<std::string, std::size_t> counts;
    for (const auto& ax : axes.axes) counts[ax] = 0;
    if (!captions.empty()) {
        const auto records = load_captions(captions);
        validate_caption_axes(records, axes.axes);
        for (const auto& r : records) {
            if (r.axis != "none") ++counts.at(r.axis);
        }
    }
    for (const auto& ax : axes.axes) std::printf("%-12s %zu\n", ax.c_str(), counts.at(ax));
    if (!out.empty()) {
        const fs::path dir = ensure_out_dir(out);
        ManifestSink sink("report-axes", argv, dir);
        if (!captions.empty()) sink.m.inputs = {captions};
        auto csv = open_out(dir / "axes.csv");
        csv << "axis,count\n";
        for (const auto& ax : axes.axes) csv << ax << ',' << counts.at(ax) << '\n';
        close_out(csv, dir / "axes.csv");
        sink.m.outputs = {"axes.csv"};
        sink.finish();
    }
    return 0;
}

// ----------------------------------------------------------------- replay

int run_replay(const std::string& manifest, const std::string& out_override) {
    const RunManifest m = load_manifest(manifest);
    if (m.argv.empty()) throw ValidationError("manifest has an empty argv record");
    std::vector<std::string> args = m.argv;
    if (!out_override.empty()) {
        bool replaced = false;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--out" && i + 1 < args.size()) {
                args[i + 1] = out_override;
                replaced = true;
                break;
            }
            if (args[i].rfind("--out=", 0) == 0) {
                args[i] = "--out=" + out_override;
                replaced = true;
                break;
            }
        }
        if (!replaced) {
            args.push_back("--out");
            args.push_back(out_override);
        }
    }
    std::fprintf(stderr, "replaying %s\n", m.subcommand.c_str());
    return dispatch(std::move(args));
}

// --------------------------------------------------------------- dispatch

int dispatch(std::vector<std::string> args) {
    const std::vector<std::string> raw = args;
    CLI::App app{"Synthetic-data curation and contrastive-training toolkit"};
    app.require_subcommand(1);
    int code = 0;

    MetricsArgs ma;
    auto* met = app.add_subcommand("metrics",
                                   "Recognizability and clustered diversity of an embedding set");
    met->add_option("--images", ma.images, "image embeddings (EMB1)")->required();
    met->add_option("--texts", ma.texts, "caption embeddings (EMB1)")->required();
    met->add_option("--captions", ma.captions, "caption records (JSONL) for id validation");
    met->add_option("--clusters", ma.clusters, "cluster count (default min(1000, captions))");
    met->add_option("--seed", ma.seed, "clustering seed");
    met->add_option("--w", ma.w, "score weight for the alignment metric");
    met->add_option("--out", ma.out, "output directory")->required();
    met->callback([&] { code = run_metrics(ma, raw); });

    SampleArgs sa;
    auto* smp = app.add_subcommand(
        "sample", "Deduplicate and concept-balance captions, or generate prompt pairs");
    smp->add_option("--captions", sa.captions, "input captions (JSONL) for curation mode");
    smp->add_option("--bank", sa.bank, "concept bank, one concept per line")->required();
    smp->add_option("--threshold", sa.threshold, "per-concept retention target");
    smp->add_option("--seed", sa.seed, "sampling seed");
    smp->add_option("--limit", sa.limit, "cap on retained captions (0 = none)");
    smp->add_option("--generate", sa.generate, "emit N prompt pairs instead of curating");
    smp->add_option("--templates", sa.templates,
                    "directory with base_caption.txt and hard_negative.txt");
    smp->add_option("--out", sa.out, "output directory")->required();
    smp->callback([&] {
        if ((sa.generate > 0) == !sa.captions.empty()) {
            throw CLI::ValidationError(
                "sample", "pass exactly one of --captions (curation) or --generate N");
        }
        if (sa.generate > 0 && sa.templates.empty()) {
            throw CLI::ValidationError("sample", "--generate needs --templates");
        }
        code = run_sample(sa, raw);
    });

    ScheduleArgs sc;
    auto* sch = app.add_subcommand("schedule-sim",
                                   "Simulate the hard-negative curriculum over synthetic ids");
    sch->add_option("--samples", sc.samples, "dataset size")->required();
    sch->add_option("--batch", sc.batch, "batch size")->required();
    sch->add_option("--epochs", sc.epochs, "epoch count");
    sch->add_option("--p-start", sc.p_start, "initial hard-negative fraction");
    sch->add_option("--p-end", sc.p_end, "final hard-negative fraction");
    sch->add_option("--hn-share", sc.hn_share, "share of samples that own a hard negative");
    sch->add_option("--seed", sc.seed, "shuffle seed");
    sch->add_option("--out", sc.out, "output directory")->required();
    sch->callback([&] { code = run_schedule_sim(sc, raw); });

    SpectraArgs sp;
    auto* spc = app.add_subcommand("spectra",
                                   "Radial frequency profiles and high-frequency energy");
    spc->add_option("--images", sp.images, "directory of .pgm/.ppm/.pnm/.img1 images")
        ->required();
    spc->add_option("--bins", sp.bins, "radial bins");
    spc->add_option("--threads", sp.threads, "worker threads for per-image analysis");
    spc->add_option("--out", sp.out, "output directory")->required();
    spc->callback([&] { code = run_spectra(sp, raw); });

    TrainToyArgs ta;
    auto* trn = app.add_subcommand("train-toy",
                                   "Train toy dual encoders on a synthetic embedding world");
    trn->add_option("--concepts", ta.concepts, "concept count");
    trn->add_option("--dim", ta.dim, "embedding dimension");
    trn->add_option("--generators", ta.generators, "generator count");
    trn->add_option("--alpha", ta.alpha, "fingerprint strength");
    trn->add_option("--sigma", ta.sigma, "image noise scale");
    trn->add_option("--sigma-text", ta.sigma_text, "text noise scale");
    trn->add_option("--hn-strength", ta.hn_strength, "hard-negative axis displacement");
    trn->add_option("--n-plus", ta.n_plus, "images per caption");
    trn->add_option("--pairs", ta.pairs, "caption count");
    trn->add_option("--with-hn", ta.with_hn, "synthesize hard negatives in the world");
    trn->add_option("--world-seed", ta.world_seed, "world synthesis seed");
    trn->add_option("--epochs", ta.epochs, "training epochs");
    trn->add_option("--batch", ta.batch, "batch size in captions (slots in curriculum mode)");
    trn->add_option("--lr", ta.lr, "peak learning rate");
    trn->add_option("--warmup", ta.warmup, "linear warmup epochs");
    trn->add_option("--i2i-weight", ta.i2i_weight, "image-to-image regularizer weight");
    trn->add_flag("--use-hn", ta.use_hn, "train with the hard-negative curriculum");
    trn->add_option("--hn-images", ta.hn_images,
                    "use hard-negative images (0 trains on hard-negative texts only)");
    trn->add_option("--p-start", ta.p_start, "curriculum start fraction");
    trn->add_option("--p-end", ta.p_end, "curriculum end fraction");
    trn->add_option("--seed", ta.seed, "base training seed");
    trn->add_option("--runs", ta.runs, "number of seeds, consecutive from --seed");
    trn->add_option("--out", ta.out, "output directory")->required();
    trn->callback([&] { code = run_train_toy(ta, raw); });

    std::uint64_t cl_seed = 0;
    std::string cl_out;
    auto* chk = app.add_subcommand("check-losses",
                                   "Compare analytic loss gradients against finite differences");
    chk->add_option("--seed", cl_seed, "batch generation seed");
    chk->add_option("--out", cl_out, "optional output directory for gradcheck.csv");
    chk->callback([&] { code = run_check_losses(cl_seed, cl_out, raw); });

    std::string dm_baseline, dm_model, dm_out;
    auto* dmt = app.add_subcommand("delta-mtl",
                                   "Mean signed relative metric change versus a baseline, in %");
    dmt->add_option("--baseline", dm_baseline, "baseline metrics CSV")->required();
    dmt->add_option("--model", dm_model, "model metrics CSV")->required();
    dmt->add_option("--out", dm_out, "optional output directory for delta.json");
    dmt->callback([&] { code = run_delta_mtl(dm_baseline, dm_model, dm_out, raw); });

    std::string ra_captions, ra_out;
    auto* rax = app.add_subcommand("report-axes",
                                   "List the semantic axes and their usage in a caption file");
    rax->add_option("--captions", ra_captions, "caption records (JSONL)");
    rax->add_option("--out", ra_out, "optional output directory for axes.csv");
    rax->callback([&] { code = run_report_axes(ra_captions, ra_out, raw); });

    std::string rp_manifest, rp_out;
    auto* rpl = app.add_subcommand("replay", "Re-execute a run from its manifest");
    rpl->add_option("--manifest", rp_manifest, "run_manifest.json of a previous run")->required();
    rpl->add_option("--out", rp_out, "redirect outputs to a different directory");
    rpl->callback([&] { code = run_replay(rp_manifest, rp_out); });

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty()) {
        std::fprintf(stderr, "usage: polygen <subcommand> [flags]; see polygen --help\n");
        return 1;
    }
    try {
        return dispatch(std::move(args));
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 2;
    }
}
