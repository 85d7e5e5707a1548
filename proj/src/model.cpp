#include "mts/model.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"
#include "mts/errors.hpp"

using nlohmann::json;

namespace mts {

void ModelConfig::validate() const {
    backbone.validate();
    if (modalities.empty()) throw ConfigError("model: modality subset must be nonempty");
    std::set<Modality> uniq(modalities.begin(), modalities.end());
    if (uniq.size() != modalities.size()) throw ConfigError("model: duplicate modality in subset");
    if (int64_t(modalities.size()) != backbone.in_channels)
        throw ConfigError("model: backbone in_channels " + std::to_string(backbone.in_channels) +
                          " != modality count " + std::to_string(modalities.size()));
    loss.validate();
    if (task == Task::Segmentation) {
        if (tafe_enabled || cmd_enabled || dsf_enabled)
            throw ConfigError("model: segmentation task uses no classification modules");
        if (loss.alpha <= 0.0) throw ConfigError("model: segmentation task needs alpha > 0");
        return;
    }
    if (cmd_enabled && task != Task::IDH)
        throw ConfigError("model: the CMD stream applies to the IDH task only");
    if (dsf_enabled && !(tafe_enabled && cmd_enabled))
        throw ConfigError("model: DSF requires both the TAFE and CMD streams");
    if (tafe_enabled && cmd_enabled && !dsf_enabled)
        throw ConfigError("model: TAFE and CMD both active requires DSF fusion");
    if (!tafe_enabled && !cmd_enabled)
        throw ConfigError("model: classification task needs at least one stream");
    if (cmd_enabled) cmd.validate();
    if (dsf_enabled) dsf.validate();
    if (tafe_enabled) tafe_stages.validate();
}

// architecture equality: training-time fields (loss weights, freeze flag,
// init seed) do not affect what a checkpoint computes at inference
bool ModelConfig::operator==(const ModelConfig& o) const {
    return backbone == o.backbone && modalities == o.modalities && task == o.task &&
           tafe_enabled == o.tafe_enabled && tafe_stages == o.tafe_stages && cmd_enabled == o.cmd_enabled &&
           cmd == o.cmd && dsf_enabled == o.dsf_enabled && dsf == o.dsf;
}

std::string ModelConfig::to_json() const {
    json j;
    j["backbone"] = {{"in_channels", backbone.in_channels},
                     {"base_channels", backbone.base_channels},
                     {"input_size", backbone.input_size},
                     {"dropout_rate", backbone.dropout_rate},
                     {"seg_channels", backbone.seg_channels},
                     {"blocks_per_stage", backbone.blocks_per_stage}};
    std::vector<std::string> mods;
    for (Modality m : modalities) mods.push_back(to_string(m));
    j["modalities"] = mods;
    j["task"] = to_string(task);
    j["tafe"] = {{"enabled", tafe_enabled}, {"stages", tafe_stages.stages}};
    j["cmd"] = {{"enabled", cmd_enabled},
                {"gamma", cmd.gamma},
                {"min_gate", cmd.min_gate},
                {"channels", cmd.channels},
                {"detach_gate", cmd.detach_gate}};
    j["dsf"] = {{"enabled", dsf_enabled},
                {"hidden_width", dsf.hidden_width},
                {"fuse_level", dsf.fuse_level == FuseLevel::Logits ? "logits" : "features"}};
    j["loss"] = {{"alpha", loss.alpha}, {"beta", loss.beta}};
    j["freeze_backbone"] = freeze_backbone;
    j["init_seed"] = init_seed;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
    }
    try {
        ModelConfig c;
        const auto& b = j.at("backbone");
        c.backbone.in_channels = b.at("in_channels").get<int64_t>();
        c.backbone.base_channels = b.at("base_channels").get<int64_t>();
        const auto size = b.at("input_size").get<std::vector<int64_t>>();
        if (size.size() != 3) throw ConfigError("model config: input_size must have 3 entries");
        c.backbone.input_size = {size[0], size[1], size[2]};
        c.backbone.dropout_rate = b.at("dropout_rate").get<double>();
        c.backbone.seg_channels = b.at("seg_channels").get<int64_t>();
        c.backbone.blocks_per_stage = b.at("blocks_per_stage").get<int>();
        c.modalities.clear();
        for (const auto& m : j.at("modalities")) c.modalities.push_back(modality_from_string(m.get<std::string>()));
        c.task = task_from_string(j.at("task").get<std::string>());
        c.tafe_enabled = j.at("tafe").at("enabled").get<bool>();
        if (c.tafe_enabled) c.tafe_stages = StageSet(j.at("tafe").at("stages").get<std::vector<int>>());
        c.cmd_enabled = j.at("cmd").at("enabled").get<bool>();
        c.cmd.gamma = j.at("cmd").at("gamma").get<double>();
        c.cmd.min_gate = j.at("cmd").at("min_gate").get<double>();
        c.cmd.channels = j.at("cmd").at("channels").get<int64_t>();
        c.cmd.detach_gate = j.at("cmd").at("detach_gate").get<bool>();
        c.dsf_enabled = j.at("dsf").at("enabled").get<bool>();
        c.dsf.hidden_width = j.at("dsf").at("hidden_width").get<int64_t>();
        c.dsf.fuse_level =
            j.at("dsf").at("fuse_level").get<std::string>() == "features" ? FuseLevel::Features : FuseLevel::Logits;
        c.loss.alpha = j.at("loss").at("alpha").get<double>();
        c.loss.beta = j.at("loss").at("beta").get<double>();
        c.freeze_backbone = j.at("freeze_backbone").get<bool>();
        c.init_seed = j.at("init_seed").get<uint64_t>();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: missing or malformed field: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

MtsModel::MtsModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    backbone_ = std::make_unique<Backbone>(cfg_.backbone, rng);
    register_child("backbone", backbone_.get());
    if (cfg_.tafe_enabled) {
        tafe_ = std::make_unique<TafeModule>(cfg_.backbone, cfg_.tafe_stages, cfg_.backbone.dropout_rate, rng);
        register_child("tafe", tafe_.get());
    }
    if (cfg_.cmd_enabled) {
        cmd_ = std::make_unique<CmdModule>(cfg_.cmd, cfg_.backbone.dropout_rate, rng);
        register_child("cmd", cmd_.get());
    }
    if (cfg_.dsf_enabled) {
        const bool logits_mode = cfg_.dsf.fuse_level == FuseLevel::Logits;
        const int64_t in_dim = logits_mode ? 4 : tafe_->fused_dim() + 2 * cfg_.cmd.channels;
        mlp_ = std::make_unique<MlpHead>(in_dim, cfg_.dsf.hidden_width, rng, logits_mode);
        register_child("mlp", mlp_.get());
    }
    if (cfg_.freeze_backbone) backbone_->set_trainable(false);
}

BundleSource MtsModel::source() const {
    if (cfg_.dsf_enabled) return BundleSource::Dsf;
    if (cfg_.tafe_enabled) return BundleSource::TafeOnly;
    return BundleSource::CmdOnly;
}

ModelOutput MtsModel::forward(const Batch& batch, bool training, Rng& rng) const {
    ModelOutput out;
    out.pyramid = backbone_->encode(batch.input);
    const FeaturePyramid& pyramid = out.pyramid;

    // alpha=0 without CMD is the SwinT ablation: the decoder is detached
    const bool need_decoder = cfg_.loss.alpha > 0.0 || cfg_.cmd_enabled || cfg_.task == Task::Segmentation;
    if (need_decoder) out.seg_logits = backbone_->decode(pyramid);

    if (cfg_.tafe_enabled)
        out.tafe_logits = tafe_->classify(tafe_->fuse_stages(pyramid), cfg_.task, training, rng);

    if (cfg_.cmd_enabled) {
        ad::Var prob = backbone_->tumor_probability(out.seg_logits);
        if (cfg_.cmd.detach_gate) prob = ad::detach(prob);
        out.cmd_features = cmd_->forward(batch.t2, batch.flair, prob, training, rng);
        out.cmd_logits = out.cmd_features.logits;
    }

    if (cfg_.task != Task::Segmentation) {
        if (cfg_.dsf_enabled) {
            const ad::Var fused = cfg_.dsf.fuse_level == FuseLevel::Logits
                                      ? fuse_dsf(out.tafe_logits, out.cmd_logits)
                                      : fuse_dsf(tafe_->fuse_stages(pyramid), out.cmd_features.pooled);
            out.final_logits = mlp_->forward(fused);
        } else {
            out.final_logits = cfg_.tafe_enabled ? out.tafe_logits : out.cmd_logits;
        }
    }

    if (cfg_.loss.alpha > 0.0 && out.seg_logits.defined() && !batch.seg_targets.empty())
        out.seg_term = seg_loss(out.seg_logits, batch.seg_targets);
    if (cfg_.task != Task::Segmentation && cfg_.loss.beta > 0.0 && !batch.labels.empty())
        out.cls_term = ad::cross_entropy_logits(out.final_logits, batch.labels);
    if (out.seg_term.defined() || out.cls_term.defined())
        out.loss = joint_loss(out.seg_term, out.cls_term, cfg_.loss);
    return out;
}

ClassificationBundle ModelOutput::bundle() const {
    ClassificationBundle b;
    if (tafe_logits.defined()) b.c_tafe = tafe_logits.value();
    if (cmd_logits.defined()) b.c_cmd = cmd_logits.value();
    if (!final_logits.defined()) throw ConfigError("bundle: no classification output (segmentation task)");
    b.c_final = final_logits.value();
    b.probabilities = softmax_rows(b.c_final);
    if (cmd_logits.defined())
        b.source = tafe_logits.defined() ? BundleSource::Dsf : BundleSource::CmdOnly;
    else
        b.source = BundleSource::TafeOnly;
    return b;
}

// ---------------------------------------------------------------------------

Batch make_batch(const std::vector<const Case*>& cases, const ModelConfig& cfg) {
    if (cases.empty()) throw DataError("make_batch: empty case list");
    const Shape vol_shape = cases.front()->volumes.begin()->second.shape();
    const int64_t b = int64_t(cases.size());
    const int64_t m = int64_t(cfg.modalities.size());
    const int64_t sp = shape_numel(vol_shape);

    Batch batch;
    batch.size = b;
    Tensor input(Shape{b, m, vol_shape[0], vol_shape[1], vol_shape[2]});
    for (int64_t bi = 0; bi < b; ++bi) {
        const Case& c = *cases[size_t(bi)];
        for (int64_t mi = 0; mi < m; ++mi) {
            const Volume3D& v = c.volume(cfg.modalities[size_t(mi)]);
            if (v.shape() != vol_shape)
                throw CaseError("make_batch: case " + c.id + " shape " + shape_str(v.shape()) +
                                " != batch shape " + shape_str(vol_shape));
            std::copy_n(v.data.ptr(), sp, input.ptr() + (bi * m + mi) * sp);
        }
    }
    batch.input = ad::Var(std::move(input));

    if (cfg.cmd_enabled) {
        Tensor t2(Shape{b, 1, vol_shape[0], vol_shape[1], vol_shape[2]});
        Tensor flair(t2.shape);
        for (int64_t bi = 0; bi < b; ++bi) {
            std::copy_n(cases[size_t(bi)]->volume(Modality::T2).data.ptr(), sp, t2.ptr() + bi * sp);
            std::copy_n(cases[size_t(bi)]->volume(Modality::FLAIR).data.ptr(), sp, flair.ptr() + bi * sp);
        }
        batch.t2 = ad::Var(std::move(t2));
        batch.flair = ad::Var(std::move(flair));
    }

    bool all_masks = true;
    for (const Case* c : cases) all_masks = all_masks && c->mask.has_value();
    if (all_masks) {
        batch.seg_targets.reserve(size_t(b * sp));
        for (const Case* c : cases) {
            auto t = mask_to_targets(*c->mask, cfg.backbone.seg_channels);
            batch.seg_targets.insert(batch.seg_targets.end(), t.begin(), t.end());
        }
    }

    if (cfg.task != Task::Segmentation) {
        bool labeled = true;
        std::vector<int> labels;
        for (const Case* c : cases) {
            switch (cfg.task) {
                case Task::IDH: labeled = labeled && c->idh != Idh::Unknown; break;
                case Task::Codel: labeled = labeled && c->codel != Codel::Unknown; break;
                case Task::Grade: labeled = labeled && c->grade != Grade::Unknown; break;
                default: break;
            }
            if (!labeled) break;
            if (cfg.task == Task::IDH) labels.push_back(c->idh == Idh::Mutant ? 1 : 0);
            if (cfg.task == Task::Codel) labels.push_back(c->codel == Codel::Codeleted ? 1 : 0);
            if (cfg.task == Task::Grade) labels.push_back(c->grade == Grade::HGG ? 1 : 0);
        }
        if (labeled) batch.labels = std::move(labels);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// checkpoint: magic, version, config JSON, named parameter blobs
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'T', 'S', 'U', 'N', 'E', 'T', '\0'};

void write_bytes(std::ofstream& out, const void* p, size_t n) {
    out.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

void read_bytes(std::ifstream& in, void* p, size_t n, const std::string& path) {
    in.read(reinterpret_cast<char*>(p), std::streamsize(n));
    if (!in) throw CheckpointError(path + ": truncated checkpoint");
}

}  // namespace

void MtsModel::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path);
    write_bytes(out, kMagic, 8);
    write_bytes(out, &kCheckpointVersion, 4);
    const std::string cfg = cfg_.to_json();
    const uint64_t cfg_len = cfg.size();
    write_bytes(out, &cfg_len, 8);
    write_bytes(out, cfg.data(), cfg.size());

    auto params = const_cast<MtsModel*>(this)->parameters();
    const uint32_t n = uint32_t(params.size());
    write_bytes(out, &n, 4);
    for (const auto& p : params) {
        const uint32_t name_len = uint32_t(p.name.size());
        write_bytes(out, &name_len, 4);
        write_bytes(out, p.name.data(), p.name.size());
        const uint32_t rank = uint32_t(p.var.shape().size());
        write_bytes(out, &rank, 4);
        write_bytes(out, p.var.shape().data(), rank * 8);
        write_bytes(out, p.var.value().ptr(), size_t(p.var.value().numel()) * 8);
    }
    if (!out) throw CheckpointError("write failed for checkpoint " + path);
}

namespace {

struct LoadedCheckpoint {
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor>> params;
};

LoadedCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    char magic[8];
    read_bytes(in, magic, 8, path);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointError(path + ": no embedded config found; this is not a checkpoint produced by this "
                                     "tool (legacy/foreign file) — re-export it with the current format");
    int32_t version = 0;
    read_bytes(in, &version, 4, path);
    if (version != kCheckpointVersion)
        throw CheckpointError(path + ": unsupported checkpoint format version " + std::to_string(version));
    uint64_t cfg_len = 0;
    read_bytes(in, &cfg_len, 8, path);
    if (cfg_len == 0 || cfg_len > (64u << 20))
        throw CheckpointError(path + ": missing or oversized embedded config");
    std::string cfg_text(cfg_len, '\0');
    read_bytes(in, cfg_text.data(), cfg_len, path);

    LoadedCheckpoint ck;
    ck.config = ModelConfig::from_json(cfg_text);
    uint32_t n = 0;
    read_bytes(in, &n, 4, path);
    for (uint32_t i = 0; i < n; ++i) {
        uint32_t name_len = 0;
        read_bytes(in, &name_len, 4, path);
        std::string name(name_len, '\0');
        read_bytes(in, name.data(), name_len, path);
        uint32_t rank = 0;
        read_bytes(in, &rank, 4, path);
        Shape shape(rank);
        read_bytes(in, shape.data(), rank * 8, path);
        Tensor t(shape);
        read_bytes(in, t.ptr(), size_t(t.numel()) * 8, path);
        ck.params.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

void assign_params(MtsModel& model, const LoadedCheckpoint& ck, const std::string& path) {
    auto params = model.parameters();
    if (params.size() != ck.params.size())
        throw CheckpointError(path + ": parameter count mismatch (" + std::to_string(ck.params.size()) +
                              " stored vs " + std::to_string(params.size()) + " expected)");
    std::map<std::string, const Tensor*> stored;
    for (const auto& [name, t] : ck.params) stored[name] = &t;
    for (auto& p : params) {
        auto it = stored.find(p.name);
        if (it == stored.end()) throw CheckpointError(path + ": parameter '" + p.name + "' missing");
        if (it->second->shape != p.var.shape())
            throw CheckpointError(path + ": parameter '" + p.name + "' shape mismatch");
        p.var.value().data = it->second->data;
    }
}

}  // namespace

std::unique_ptr<MtsModel> MtsModel::load_checkpoint(const std::string& path) {
    LoadedCheckpoint ck = read_checkpoint(path);
    auto model = std::make_unique<MtsModel>(ck.config);
    assign_params(*model, ck, path);
    return model;
}

void MtsModel::load_weights(const std::string& path) {
    LoadedCheckpoint ck = read_checkpoint(path);
    if (!(ck.config == cfg_))
        throw CheckpointError(path + ": checkpoint config does not match the target model configuration");
    assign_params(*this, ck, path);
}

}  // namespace mts
