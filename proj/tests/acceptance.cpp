// Acceptance suite: runs every acceptance criterion end to end and prints
// one PASS/FAIL line per criterion. The learnability criteria train real
// models on a synthetic phantom dataset, so the full run takes a while on a
// laptop-class machine.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mts/explain.hpp"
#include "mts/metrics.hpp"
#include "mts/phantom.hpp"
#include "mts/trainer.hpp"
#include "oracles.hpp"

using namespace mts;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

struct Criterion {
    int id;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

std::vector<Criterion> g_results;

void run_criterion(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    Criterion c{id, name};
    const auto t0 = clk::now();
    try {
        auto [pass, detail] = fn();
        c.pass = pass;
        c.detail = detail;
    } catch (const std::exception& e) {
        c.pass = false;
        c.detail = std::string("exception: ") + e.what();
    }
    c.seconds = std::chrono::duration<double>(clk::now() - t0).count();
    std::printf("[%s] criterion %2d: %s (%.1fs) %s\n", c.pass ? "PASS" : "FAIL", id, name.c_str(),
                c.seconds, c.detail.c_str());
    std::fflush(stdout);
    g_results.push_back(std::move(c));
}

MaskVolume random_mask(int64_t n, double fill, Rng& rng) {
    MaskVolume m(Shape{n, n, n}, {1.0, 1.0, 1.0});
    for (auto& v : m.labels) v = rng.uniform() < fill ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// criteria 1-2: metric oracles and the Dice-IoU identity
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_metric_oracles() {
    Rng rng(101);
    double worst = 0.0;
    int hd_checked = 0;
    for (int rep = 0; rep < 500; ++rep) {
        const int64_t n = 3 + rng.uniform_int(4);
        const auto a = random_mask(n, rng.uniform(0.1, 0.6), rng);
        const auto b = random_mask(n, rng.uniform(0.1, 0.6), rng);
        worst = std::max(worst, std::abs(dice(a, b, 1) - oracle::dice_bruteforce(a, b, 1)));
        worst = std::max(worst, std::abs(iou(a, b, 1) - oracle::iou_bruteforce(a, b, 1)));
        if (a.count(1) && b.count(1)) {
            worst = std::max(worst, std::abs(hausdorff(a, b, 1) - oracle::hausdorff_bruteforce(a, b, 1)));
            ++hd_checked;
        }
    }
    for (int rep = 0; rep < 500; ++rep) {
        const int n = 4 + int(rng.uniform_int(40));
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            scores[size_t(i)] = std::round(rng.uniform() * 10.0) / 10.0;
            labels[size_t(i)] = rng.bernoulli(0.4) ? 1 : 0;
        }
        labels[0] = 0;
        labels[1] = 1;
        worst = std::max(worst, std::abs(roc_auc(scores, labels) - oracle::auc_paircount(scores, labels)));

        // confusion rates against direct formula evaluation
        const ConfusionCounts c{rng.uniform_int(20), rng.uniform_int(20), rng.uniform_int(20),
                                rng.uniform_int(20)};
        if (c.total() == 0) continue;
        const auto s = confusion_stats(c);
        const double tp = double(c.tp), fp = double(c.fp), tn = double(c.tn), fn = double(c.fn);
        worst = std::max(worst, std::abs(s.acc - (tp + tn) / double(c.total())));
        const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        worst = std::max(worst, std::abs(s.f1 - f1));
        const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
        const double mcc = den > 0 ? (tp * tn - fp * fn) / std::sqrt(den) : 0.0;
        worst = std::max(worst, std::abs(s.mcc - mcc));
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max |impl - oracle| = %.2e over 500+500 instances (%d hausdorff)",
                  worst, hd_checked);
    return {worst < 1e-9, buf};
}

std::pair<bool, std::string> criterion_dice_iou_identity() {
    Rng rng(102);
    double worst = 0.0;
    for (int rep = 0; rep < 500; ++rep) {
        const int64_t n = 3 + rng.uniform_int(4);
        const auto a = random_mask(n, rng.uniform(0.05, 0.7), rng);
        const auto b = random_mask(n, rng.uniform(0.05, 0.7), rng);
        const double d = dice(a, b, 1), i = iou(a, b, 1);
        worst = std::max(worst, std::abs(d - 2.0 * i / (1.0 + i)));
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max |Dice - 2*IoU/(1+IoU)| = %.2e", worst);
    return {worst < 1e-9, buf};
}

// ---------------------------------------------------------------------------
// criterion 3: DeLong
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_delong() {
    Rng rng(103);
    bool bit_exact = true;
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 6 + int(rng.uniform_int(40));
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            scores[size_t(i)] = std::round(rng.uniform() * 20.0) / 20.0;
            labels[size_t(i)] = rng.bernoulli(0.5) ? 1 : 0;
        }
        labels[0] = 0;
        labels[1] = 1;
        const RocResult r = delong_ci(scores, labels);
        bit_exact = bit_exact && r.auc == roc_auc(scores, labels);
    }

    const RocResult perfect = delong_ci({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0});
    const bool perfect_ok =
        perfect.auc == 1.0 && perfect.delong_variance == 0.0 && perfect.ci_low == 1.0 && perfect.ci_high == 1.0;

    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        scores.push_back(rng.uniform());
        labels.push_back(i % 2);
    }
    const RocResult base = delong_ci(scores, labels);
    std::vector<double> s4;
    std::vector<int> l4;
    for (int k = 0; k < 4; ++k) {
        s4.insert(s4.end(), scores.begin(), scores.end());
        l4.insert(l4.end(), labels.begin(), labels.end());
    }
    const RocResult quad = delong_ci(s4, l4);
    const double ratio = base.delong_variance / quad.delong_variance;
    const bool ratio_ok = ratio > 4.0 * 0.85 && ratio < 4.0 * 1.15;

    char buf[160];
    std::snprintf(buf, sizeof(buf), "auc bit-exact: %s; perfect-sep var=0: %s; x4 variance ratio %.3f",
                  bit_exact ? "yes" : "NO", perfect_ok ? "yes" : "NO", ratio);
    return {bit_exact && perfect_ok && ratio_ok, buf};
}

// ---------------------------------------------------------------------------
// criterion 4: shape contract
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_shape_contract() {
    Rng rng(104);
    bool ok = true;
    for (int64_t c : {2, 8})
        for (int64_t size : {16, 32})
            for (int64_t seg : {2, 4}) {
                BackboneConfig cfg;
                cfg.base_channels = c;
                cfg.in_channels = 4;
                cfg.input_size = {size, size, size};
                cfg.seg_channels = seg;
                Backbone bb(cfg, rng);
                Tensor in(Shape{1, 4, size, size, size});
                Rng vr(uint64_t(c * 100 + size));
                for (double& v : in.data) v = vr.normal();
                const auto pyramid = bb.encode(ad::Var(in));
                for (int stage = 1; stage <= 4; ++stage) {
                    const int64_t ch = c << (stage - 1);
                    const int64_t sp = size >> stage;
                    ok = ok && pyramid.x(stage).shape() == Shape{1, ch, sp, sp, sp};
                }
                const ad::Var logits = bb.decode(pyramid);
                ok = ok && logits.shape() == Shape{1, seg, size, size, size};
                const ad::Var sm = ad::softmax_axis1(logits);
                const int64_t sp = size * size * size;
                for (int64_t v = 0; v < sp && ok; v += 37) {
                    double sum = 0.0;
                    for (int64_t ch = 0; ch < seg; ++ch) sum += sm.value()[ch * sp + v];
                    ok = ok && std::abs(sum - 1.0) < 1e-6;
                }
            }
    return {ok, "d_i = C*2^(i-1), spatial/2^i for C in {2,8}, sizes {16,32}; softmax sums to 1"};
}

// ---------------------------------------------------------------------------
// criterion 5: equation fidelity on hand-set micro-inputs
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_equation_fidelity() {
    double worst = 0.0;
    auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

    // difference amplification
    check(amplify_difference(ad::Var(Tensor({1, 1, 1, 1, 1}, {3.0})), ad::Var(Tensor({1, 1, 1, 1, 1}, {1.0})), 2.0)
              .value()[0],
          4.0);
    const ad::Var f_t2(Tensor({1, 2, 1, 1, 2}, {1.5, -2.0, 0.25, 3.0}));
    const ad::Var f_fl(Tensor({1, 2, 1, 1, 2}, {0.5, 1.0, -0.75, 1.0}));
    const ad::Var fd = amplify_difference(f_t2, f_fl, 2.5);
    const double fd_expect[4] = {2.5 * 1.0, 2.5 * -3.0, 2.5 * 1.0, 2.5 * 2.0};
    for (int i = 0; i < 4; ++i) check(fd.value()[i], fd_expect[i]);

    // weighted feature augmentation F' = F + A*F
    const ad::Var attn(Tensor({1, 1, 1, 1, 2}, {0.25, 0.75}));
    const ad::Var aug = augment_features(f_t2, attn);
    check(aug.value()[0], 1.5 * 1.25);
    check(aug.value()[1], -2.0 * 1.75);
    check(aug.value()[2], 0.25 * 1.25);
    check(aug.value()[3], 3.0 * 1.75);
    check(augment_features(ad::Var(Tensor({1, 1, 1, 1, 1}, {-2.0})), ad::Var(Tensor({1, 1, 1, 1, 1}, {0.25})))
              .value()[0],
          -2.5);

    // tumor gating with the min_gate lower bound
    const ad::Var t2(Tensor({1, 1, 1, 1, 2}, {2.0, -4.0}));
    const ad::Var fl(Tensor({1, 1, 1, 1, 2}, {1.0, 3.0}));
    {
        auto [g2, gf] = gate_inputs(t2, fl, ad::Var(Tensor({1, 1, 1, 1, 2}, 0.0)), 0.1);
        check(g2.value()[0], 0.2);
        check(g2.value()[1], -0.4);
        check(gf.value()[0], 0.1);
    }
    {
        auto [g2, gf] = gate_inputs(t2, fl, ad::Var(Tensor({1, 1, 1, 1, 2}, 1.0)), 0.1);
        check(g2.value()[0], 2.0);
        check(gf.value()[1], 3.0);
    }
    {
        auto [g2, gf] = gate_inputs(t2, fl, ad::Var(Tensor({1, 1, 1, 1, 2}, 0.5)), 0.1);
        check(g2.value()[0], 0.55 * 2.0);
        check(gf.value()[1], 0.55 * 3.0);
    }
    // exact lower bound of the gate map on random probabilities
    Rng rng(105);
    Tensor p(Shape{1, 1, 2, 2, 2});
    for (double& v : p.data) v = rng.uniform();
    p.data[3] = 0.0;
    double min_gate_seen = 1e9;
    const ad::Var gate = ad::affine(ad::Var(p), 0.9, 0.1);
    for (double v : gate.value().data) min_gate_seen = std::min(min_gate_seen, v);
    const bool gate_bound_exact = min_gate_seen >= 0.1 && gate.value()[3] == 0.1;

    // dual-stream fusion order and content
    const ad::Var fused = fuse_dsf(ad::Var(Tensor({1, 2}, {1.0, 0.0})), ad::Var(Tensor({1, 2}, {0.0, 1.0})));
    check(fused.value()[0], 1.0);
    check(fused.value()[1], 0.0);
    check(fused.value()[2], 0.0);
    check(fused.value()[3], 1.0);

    // joint loss
    const ad::Var seg(Tensor({1}, {0.3})), cls(Tensor({1}, {0.7}));
    check(joint_loss(seg, cls, {1.0, 1.0}).item(), 1.0);
    check(joint_loss(seg, cls, {2.0, 0.0}).item(), 0.6);
    check(joint_loss(seg, cls, {0.0, 0.5}).item(), 0.35);

    char buf[96];
    std::snprintf(buf, sizeof(buf), "max deviation %.2e; gate lower bound 0.1 exact: %s", worst,
                  gate_bound_exact ? "yes" : "NO");
    return {worst < 1e-9 && gate_bound_exact, buf};
}

// ---------------------------------------------------------------------------
// criterion 6: gradient checks
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_gradient_checks() {
    const auto t0 = clk::now();

    // (a) seg_loss through encoder+decoder, every parameter
    Rng rng(106);
    BackboneConfig bc;
    bc.base_channels = 2;
    bc.in_channels = 1;
    bc.input_size = {16, 16, 16};
    Backbone bb(bc, rng);
    Tensor in(Shape{1, 1, 16, 16, 16});
    Rng vr(107);
    for (double& v : in.data) v = vr.normal();
    const ad::Var input(in);
    std::vector<int> target(16 * 16 * 16, 0);
    Rng tr(108);
    for (auto& t : target) t = tr.bernoulli(0.3) ? 1 : 0;
    auto seg_forward = [&]() { return seg_loss(bb.decode(bb.encode(input)), target); };
    const auto seg_res =
        oracle::check_gradients([&]() { return seg_forward().item(); }, seg_forward, bb.parameters());

    // (b) the full DSF path: joint loss over all model parameters. The gate
    // must stay attached here: with the default detach, finite differences
    // see the (real) derivative through the tumor-probability gate that the
    // analytic gradient intentionally drops.
    ModelConfig mc;
    mc.backbone.base_channels = 2;
    mc.backbone.in_channels = 4;
    mc.backbone.input_size = {16, 16, 16};
    mc.cmd.channels = 4;
    mc.cmd.detach_gate = false;
    mc.init_seed = 109;
    MtsModel model(mc);
    // give the zero-initialized heads weight so every path carries gradient
    Rng hr(110);
    for (auto& p : model.parameters())
        if (p.name.rfind("tafe.head", 0) == 0 || p.name == "cmd.head.weight")
            for (double& v : p.var.value().data) v = 0.2 * hr.normal();

    PhantomSpec spec;
    spec.grid = 16;
    spec.core_radius = 4;
    spec.rim_thickness = 1;
    spec.center_jitter = 1;
    spec.mismatch = true;
    Case c = generate_phantom(spec, 111);
    const Batch batch = make_batch({&c}, mc);
    auto dsf_forward = [&]() {
        Rng fr(0);
        return model.forward(batch, false, fr).loss;
    };
    const auto dsf_res =
        oracle::check_gradients([&]() { return dsf_forward().item(); }, dsf_forward, model.parameters());

    const double secs = std::chrono::duration<double>(clk::now() - t0).count();
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "seg_loss: %ld params, max rel err %.2e; DSF path: %ld params, max rel err %.2e",
                  seg_res.checked, seg_res.max_rel_err, dsf_res.checked, dsf_res.max_rel_err);
    return {seg_res.max_rel_err <= 1e-3 && dsf_res.max_rel_err <= 1e-3 && secs < 120.0, buf};
}

// ---------------------------------------------------------------------------
// criteria 7-9: phantom-scale learnability, guidance direction, explainability
// ---------------------------------------------------------------------------

struct PhantomBench {
    std::string train_dir, test_dir;
    Manifest train_manifest, test_manifest;
};

PhantomSpec acceptance_phantom_spec() {
    PhantomSpec spec;
    spec.grid = 32;
    spec.core_radius = 7;
    spec.rim_thickness = 2;
    spec.center_jitter = 2;
    spec.noise_sigma = 0.03;
    spec.contrast = 1.2;
    return spec;
}

PhantomBench make_phantom_bench(const std::string& root) {
    PhantomBench b;
    b.train_dir = root + "/train";
    b.test_dir = root + "/test";
    fs::remove_all(b.train_dir);
    fs::remove_all(b.test_dir);
    b.train_manifest = write_phantom_dataset(acceptance_phantom_spec(), 100, 71, b.train_dir);
    b.test_manifest = write_phantom_dataset(acceptance_phantom_spec(), 40, 72, b.test_dir);
    return b;
}

TrainConfig acceptance_train_config(bool tafe, bool cmd, bool dsf) {
    TrainConfig cfg;
    cfg.model.backbone.base_channels = 8;  // toy scale per the acceptance setup
    cfg.model.backbone.in_channels = 4;
    cfg.model.backbone.input_size = {32, 32, 32};
    cfg.model.tafe_enabled = tafe;
    cfg.model.cmd_enabled = cmd;
    cfg.model.dsf_enabled = dsf;
    cfg.model.cmd.channels = 8;
    cfg.model.init_seed = 7;
    cfg.max_epochs = 15;   // the recipe trains "up to" a budget; patience governs
    cfg.batch_size = 2;    // recipe
    cfg.lr = 1e-4;         // recipe: Adam, lr 1e-4
    cfg.patience = 5;      // recipe
    cfg.seed = 29;
    return cfg;
}

double ensemble_auc(const std::vector<std::string>& checkpoints, const Manifest& test_manifest,
                    const TrainConfig& cfg) {
    const auto models = load_ensemble(checkpoints);
    std::vector<const MtsModel*> ptrs;
    for (const auto& m : models) ptrs.push_back(m.get());
    const auto entries = test_manifest.eligible_entries(Task::IDH, cfg.required_modalities());
    const CaseStore store = CaseStore::load(entries, cfg.model.backbone.input_size);
    std::vector<std::string> ids;
    std::vector<int> labels;
    for (const auto& e : entries) {
        ids.push_back(e.case_id);
        labels.push_back(e.class_label(Task::IDH));
    }
    const auto scores = ensemble_scores(ptrs, store.select(ids));
    return roc_auc(scores, labels);
}

// filled by criterion 7 for reuse in criteria 8 and 9
static PhantomBench g_bench;
static std::string g_dsf_checkpoint;

std::pair<bool, std::string> criterion_phantom_learnability(const std::string& root) {
    g_bench = make_phantom_bench(root + "/phantoms");

    struct Row {
        const char* name;
        bool tafe, cmd, dsf;
        double auc = 0.0;
    };
    std::vector<Row> rows = {{"TAFE", true, false, false}, {"CMD", false, true, false}, {"DSF", true, true, true}};
    for (auto& row : rows) {
        const TrainConfig cfg = acceptance_train_config(row.tafe, row.cmd, row.dsf);
        const CvResult cv =
            train_cross_validation(cfg, g_bench.train_manifest, root + "/runs/" + row.name);
        row.auc = ensemble_auc(cv.checkpoints, g_bench.test_manifest, cfg);
        if (row.dsf) g_dsf_checkpoint = cv.checkpoints.front();
        std::printf("    %s ensemble AUC on 40 held-out phantoms: %.4f\n", row.name, row.auc);
        std::fflush(stdout);
    }
    const double tafe = rows[0].auc, cmd = rows[1].auc, dsf = rows[2].auc;
    const bool pass = dsf >= 0.90 && dsf >= std::max(tafe, cmd) - 0.02;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "AUC: TAFE %.3f, CMD %.3f, DSF %.3f (need DSF >= 0.90 and >= max-0.02)",
                  tafe, cmd, dsf);
    return {pass, buf};
}

std::pair<bool, std::string> criterion_guidance_direction(const std::string& root) {
    // TAFE-4 vs SwinT-4 (alpha = 0, no segmentation guidance) across 3 seeds,
    // one fold per seed, evaluated on the held-out phantoms
    double tafe_sum = 0.0, swint_sum = 0.0;
    const auto entries = g_bench.train_manifest.eligible_entries(
        Task::IDH, {Modality::T1, Modality::T1C, Modality::T2, Modality::FLAIR});
    for (uint64_t seed : {1, 2, 3}) {
        for (const bool guided : {true, false}) {
            TrainConfig cfg = acceptance_train_config(true, false, false);
            cfg.model.tafe_stages = StageSet::preset("TAFE-4");
            if (!guided) cfg.model.loss.alpha = 0.0;  // SwinT: decoder detached
            cfg.seed = seed;
            cfg.model.init_seed = seed * 31;

            const FoldPlan plan = split_folds(entries, Task::IDH, 5, seed);
            std::vector<std::string> train_ids, val_ids = plan.folds[0];
            for (int f = 1; f < 5; ++f)
                train_ids.insert(train_ids.end(), plan.folds[size_t(f)].begin(), plan.folds[size_t(f)].end());
            const CaseStore store = CaseStore::load(entries, cfg.model.backbone.input_size);
            const std::string dir = root + "/runs/" + (guided ? "tafe4_seed" : "swint4_seed") +
                                    std::to_string(seed);
            const RunRecord rec = train_fold(cfg, train_ids, val_ids, store, dir);
            const double auc = ensemble_auc({rec.checkpoint_path}, g_bench.test_manifest, cfg);
            (guided ? tafe_sum : swint_sum) += auc;
            std::printf("    seed %llu %s AUC: %.4f\n", (unsigned long long)seed,
                        guided ? "TAFE-4" : "SwinT-4", auc);
            std::fflush(stdout);
        }
    }
    const double tafe = tafe_sum / 3.0, swint = swint_sum / 3.0;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "mean AUC over 3 seeds: TAFE-4 %.3f vs SwinT-4 %.3f (need TAFE-4 >= SwinT-4 - 0.02)",
                  tafe, swint);
    return {tafe >= swint - 0.02, buf};
}

std::pair<bool, std::string> criterion_explainability() {
    if (g_dsf_checkpoint.empty()) return {false, "no trained DSF checkpoint (criterion 7 did not run)"};
    auto model = MtsModel::load_checkpoint(g_dsf_checkpoint);

    const auto entries = g_bench.test_manifest.eligible_entries(
        Task::IDH, {Modality::T1, Modality::T1C, Modality::T2, Modality::FLAIR});
    const CaseStore store = CaseStore::load(entries, model->config().backbone.input_size);

    int occlusion_hits = 0, gradcam_hits = 0, evaluated = 0;
    Rng rng(0);
    for (const auto& e : entries) {
        if (evaluated >= 12) break;
        const Case& c = store.by_id(e.case_id);
        const Batch b = make_batch({&c}, model->config());
        const ClassificationBundle bundle = model->forward(b, false, rng).bundle();
        const int truth = e.class_label(Task::IDH);
        const int pred = bundle.probabilities[1] >= 0.5 ? 1 : 0;
        if (pred != truth) continue;  // correctly classified cases only
        ++evaluated;

        // lesion bounding box from the case's own mask
        int64_t lo[3] = {1 << 20, 1 << 20, 1 << 20}, hi[3] = {-1, -1, -1};
        const auto& mask = *c.mask;
        for (int64_t z = 0; z < 32; ++z)
            for (int64_t y = 0; y < 32; ++y)
                for (int64_t x = 0; x < 32; ++x)
                    if (mask.at(z, y, x)) {
                        lo[0] = std::min(lo[0], z);
                        lo[1] = std::min(lo[1], y);
                        lo[2] = std::min(lo[2], x);
                        hi[0] = std::max(hi[0], z);
                        hi[1] = std::max(hi[1], y);
                        hi[2] = std::max(hi[2], x);
                    }

        // the upsampled occlusion map is constant over each stride cell, so
        // the maximum is attained by a block of voxels; localization holds
        // when that block touches the lesion bounding box
        const Heatmap occ = occlusion_map(*model, c, {8, 8, 8}, {8, 8, 8}, 0.0);
        const double occ_max = occ.values.max();
        bool occ_inside = false;
        for (int64_t z = lo[0]; z <= hi[0] && !occ_inside; ++z)
            for (int64_t y = lo[1]; y <= hi[1] && !occ_inside; ++y)
                for (int64_t x = lo[2]; x <= hi[2] && !occ_inside; ++x)
                    occ_inside = occ.values[(z * 32 + y) * 32 + x] == occ_max;
        occlusion_hits += occ_inside;

        const Heatmap cam = gradcam(*model, c, "x4");
        double in_sum = 0, out_sum = 0;
        int64_t in_n = 0, out_n = 0;
        for (int64_t i = 0; i < cam.values.numel(); ++i) {
            if (mask.labels[size_t(i)]) {
                in_sum += cam.values[i];
                ++in_n;
            } else {
                out_sum += cam.values[i];
                ++out_n;
            }
        }
        gradcam_hits += in_sum / double(in_n) > out_sum / double(out_n);
    }
    if (evaluated == 0) return {false, "no correctly classified held-out phantoms"};
    const double occ_rate = double(occlusion_hits) / double(evaluated);
    const double cam_rate = double(gradcam_hits) / double(evaluated);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "on %d correct cases: occlusion max in lesion bbox %.0f%%, gradcam tumor>background %.0f%%",
                  evaluated, 100 * occ_rate, 100 * cam_rate);
    return {occ_rate >= 0.8 && cam_rate >= 0.8, buf};
}

// ---------------------------------------------------------------------------
// criteria 10-11: ensemble contract, early stopping
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_ensemble_contract(const std::string& root) {
    const std::vector<Tensor> probs = {Tensor({1, 2}, {0.6, 0.4}), Tensor({1, 2}, {0.8, 0.2}),
                                       Tensor({1, 2}, {0.7, 0.3}), Tensor({1, 2}, {0.5, 0.5}),
                                       Tensor({1, 2}, {0.9, 0.1})};
    const Tensor mean = average_probability_rows(probs);
    const bool hand_ok = mean[0] == 0.70 && std::abs(mean[1] - 0.30) < 1e-15;

    ModelConfig mc;
    mc.backbone.base_channels = 2;
    mc.backbone.input_size = {16, 16, 16};
    mc.cmd.channels = 4;
    mc.init_seed = 23;
    MtsModel model(mc);
    // nonzero heads so probabilities are not the degenerate 0.5
    Rng hr(24);
    for (auto& p : model.parameters())
        if (p.name.rfind("tafe.head", 0) == 0 || p.name == "cmd.head.weight")
            for (double& v : p.var.value().data) v = 0.3 * hr.normal();
    fs::create_directories(root);
    const std::string path = root + "/ensemble_one.mts";
    model.save_checkpoint(path);

    PhantomSpec spec;
    spec.grid = 16;
    spec.core_radius = 4;
    spec.rim_thickness = 1;
    spec.center_jitter = 1;
    const Case c = generate_phantom(spec, 31);
    const ClassificationBundle ens = ensemble_predict(std::vector<std::string>(5, path), c);
    Rng rng(0);
    const ClassificationBundle one = model.forward(make_batch({&c}, mc), false, rng).bundle();
    const bool identical =
        std::abs(ens.probabilities[0] - one.probabilities[0]) < 1e-12 &&
        std::abs(ens.probabilities[1] - one.probabilities[1]) < 1e-12;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "hand example -> (%.2f, %.2f); five identical checkpoints == single: %s",
                  mean[0], mean[1], identical ? "yes" : "NO");
    return {hand_ok && identical, buf};
}

std::pair<bool, std::string> criterion_early_stopping() {
    EarlyStopper stopper(5);
    int epochs = 0;
    for (int e = 1; e <= 100; ++e) {
        ++epochs;
        stopper.update(1.0 + 0.05 * e);  // synthetic monotonically worsening loss
        if (stopper.should_stop()) break;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "worsening run stopped after %d epochs (best %d + patience 5)", epochs,
                  stopper.best_epoch());
    return {epochs == 6 && stopper.best_epoch() == 1, buf};
}

}  // namespace

int main(int argc, char** argv) {
    const std::string root = argc > 1 ? argv[1] : "/tmp/mts_acceptance";
    fs::create_directories(root);
    std::printf("acceptance suite (work dir: %s)\n", root.c_str());

    run_criterion(1, "metric oracle suite (500 mask pairs + 500 score sets, 1e-9)", criterion_metric_oracles);
    run_criterion(2, "Dice-IoU identity", criterion_dice_iou_identity);
    run_criterion(3, "DeLong: bit-exact AUC, zero variance at separation, x4 shrinkage", criterion_delong);
    run_criterion(4, "encoder/decoder shape contract", criterion_shape_contract);
    run_criterion(5, "equation fidelity on hand-set micro-inputs (1e-9)", criterion_equation_fidelity);
    run_criterion(6, "gradient checks vs central differences (rel err <= 1e-3)", criterion_gradient_checks);
    run_criterion(7, "phantom learnability: 5-fold CV, ensemble AUC >= 0.90; DSF >= max(TAFE,CMD)-0.02",
                  [&] { return criterion_phantom_learnability(root); });
    run_criterion(8, "segmentation guidance direction: TAFE-4 >= SwinT-4 - 0.02 across 3 seeds",
                  [&] { return criterion_guidance_direction(root); });
    run_criterion(9, "explainability localization on correctly classified phantoms (>= 80%)",
                  criterion_explainability);
    run_criterion(10, "ensemble contract: mean of probabilities", [&] { return criterion_ensemble_contract(root); });
    run_criterion(11, "early stopping at patience+1 after the best epoch", criterion_early_stopping);

    int failed = 0;
    double total = 0.0;
    for (const auto& c : g_results) {
        failed += !c.pass;
        total += c.seconds;
    }
    std::printf("%d/%zu criteria passed (total %.0fs)\n", int(g_results.size()) - failed, g_results.size(),
                total);
    return failed == 0 ? 0 : 1;
}
