#include "mts/runconfig.hpp"

#include <fstream>

using nlohmann::json;

namespace mts {

json default_run_config() {
    return json{
        {"schema_version", kRunConfigSchema},
        {"model",
         {{"base_channels", 8},
          {"input_size", {32, 32, 32}},
          {"seg_channels", 2},
          {"dropout", 0.5},
          {"blocks_per_stage", 1}}},
        {"modalities", {"t1", "t1c", "t2", "flair"}},
        {"tafe", {{"enabled", true}, {"stages", "TAFE-2"}}},
        {"cmd",
         {{"enabled", true},
          {"gamma", 2.0},
          {"min_gate", 0.1},
          {"channels", 16},
          {"detach_gate", true}}},
        {"dsf", {{"enabled", true}, {"hidden_width", 16}, {"fuse_level", "logits"}}},
        {"loss", {{"alpha", 1.0}, {"beta", 1.0}}},
        {"train",
         {{"task", "idh"},
          {"epochs", 100},
          {"batch_size", 2},
          {"lr", 1e-4},
          {"patience", 5},
          {"seed", 0},
          {"augment", true},
          {"freeze_backbone", false}}},
    };
}

namespace {

void collect_unknown_keys(const json& value, const json& reference, const std::string& prefix,
                          std::vector<std::string>& unknown) {
    if (!value.is_object()) return;
    for (const auto& [key, sub] : value.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!reference.is_object() || !reference.contains(key)) {
            unknown.push_back(path);
            continue;
        }
        collect_unknown_keys(sub, reference.at(key), path, unknown);
    }
}

void merge_over(json& base, const json& overlay) {
    for (const auto& [key, sub] : overlay.items()) {
        if (sub.is_object() && base.contains(key) && base[key].is_object())
            merge_over(base[key], sub);
        else
            base[key] = sub;
    }
}

}  // namespace

json load_run_config(const std::string& path) {
    json config = default_run_config();
    if (path.empty()) return config;

    std::ifstream in(path);
    if (!in) throw ConfigError("config file not readable: " + path);
    json user;
    try {
        in >> user;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    if (!user.is_object()) throw ConfigError(path + ": config must be a JSON object");

    std::vector<std::string> unknown;
    collect_unknown_keys(user, config, "", unknown);
    if (!unknown.empty()) {
        std::string keys;
        for (const auto& k : unknown) keys += (keys.empty() ? "" : ", ") + k;
        throw ConfigError(path + ": unknown config keys: " + keys);
    }
    if (user.contains("schema_version") && user["schema_version"].get<int>() != kRunConfigSchema)
        throw ConfigError(path + ": unsupported schema_version (expected " +
                          std::to_string(kRunConfigSchema) + ")");
    merge_over(config, user);
    return config;
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key.path=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    // walk the dotted path against the defaults for existence and typing
    std::vector<std::string> parts;
    size_t pos = 0;
    while (pos <= path.size()) {
        const size_t dot = path.find('.', pos);
        parts.push_back(path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos));
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    json* node = &config;
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object() || !node->contains(parts[i]))
            throw ConfigError("unknown config key '" + path + "'");
        node = &(*node)[parts[i]];
    }
    if (!node->is_object() || !node->contains(parts.back()))
        throw ConfigError("unknown config key '" + path + "'");
    json& slot = (*node)[parts.back()];

    try {
        if (slot.is_boolean())
            slot = (value == "true" || value == "1");
        else if (slot.is_number_integer())
            slot = std::stoll(value);
        else if (slot.is_number_float())
            slot = std::stod(value);
        else if (slot.is_string())
            slot = value;
        else
            slot = json::parse(value);  // arrays
    } catch (const std::exception&) {
        throw ConfigError("cannot parse override value '" + value + "' for key '" + path + "'");
    }
}

TrainConfig train_config_from_json(const json& config) {
    TrainConfig cfg;
    try {
        const json& model = config.at("model");
        cfg.model.backbone.base_channels = model.at("base_channels").get<int64_t>();
        const auto size = model.at("input_size").get<std::vector<int64_t>>();
        if (size.size() != 3) throw ConfigError("model.input_size must have 3 entries");
        cfg.model.backbone.input_size = {size[0], size[1], size[2]};
        cfg.model.backbone.seg_channels = model.at("seg_channels").get<int64_t>();
        cfg.model.backbone.dropout_rate = model.at("dropout").get<double>();
        cfg.model.backbone.blocks_per_stage = model.at("blocks_per_stage").get<int>();

        cfg.model.modalities.clear();
        for (const auto& m : config.at("modalities"))
            cfg.model.modalities.push_back(modality_from_string(m.get<std::string>()));
        cfg.model.backbone.in_channels = int64_t(cfg.model.modalities.size());

        cfg.model.task = task_from_string(config.at("train").at("task").get<std::string>());
        cfg.model.tafe_enabled = config.at("tafe").at("enabled").get<bool>();
        if (cfg.model.tafe_enabled) {
            const json& stages = config.at("tafe").at("stages");
            cfg.model.tafe_stages =
                stages.is_string() ? StageSet::preset(stages.get<std::string>()) : StageSet(stages.get<std::vector<int>>());
        }
        cfg.model.cmd_enabled = config.at("cmd").at("enabled").get<bool>();
        cfg.model.cmd.gamma = config.at("cmd").at("gamma").get<double>();
        cfg.model.cmd.min_gate = config.at("cmd").at("min_gate").get<double>();
        cfg.model.cmd.channels = config.at("cmd").at("channels").get<int64_t>();
        cfg.model.cmd.detach_gate = config.at("cmd").at("detach_gate").get<bool>();
        cfg.model.dsf_enabled = config.at("dsf").at("enabled").get<bool>();
        cfg.model.dsf.hidden_width = config.at("dsf").at("hidden_width").get<int64_t>();
        cfg.model.dsf.fuse_level = config.at("dsf").at("fuse_level").get<std::string>() == "features"
                                       ? FuseLevel::Features
                                       : FuseLevel::Logits;
        cfg.model.loss.alpha = config.at("loss").at("alpha").get<double>();
        cfg.model.loss.beta = config.at("loss").at("beta").get<double>();
        cfg.model.freeze_backbone = config.at("train").at("freeze_backbone").get<bool>();

        // segmentation task implies classification modules off
        if (cfg.model.task == Task::Segmentation) {
            cfg.model.tafe_enabled = false;
            cfg.model.cmd_enabled = false;
            cfg.model.dsf_enabled = false;
        } else if (cfg.model.task != Task::IDH) {
            // CMD/DSF apply to IDH only
            cfg.model.cmd_enabled = false;
            cfg.model.dsf_enabled = false;
        }

        cfg.max_epochs = config.at("train").at("epochs").get<int>();
        cfg.batch_size = config.at("train").at("batch_size").get<int>();
        cfg.lr = config.at("train").at("lr").get<double>();
        cfg.patience = config.at("train").at("patience").get<int>();
        cfg.seed = config.at("train").at("seed").get<uint64_t>();
        cfg.model.init_seed = cfg.seed;
        cfg.augment_enabled = config.at("train").at("augment").get<bool>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: missing or malformed field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace mts
