#include "odxu/config.hpp"

#include <fstream>

#include "odxu/errors.hpp"

namespace odxu {

using nlohmann::json;

namespace {

void read_train(const json& j, TrainConfig& cfg) {
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        const std::string kind = o.value("kind", std::string("adam"));
        if (kind == "adam")
            cfg.optimizer.kind = OptimizerConfig::Kind::Adam;
        else if (kind == "sgd")
            cfg.optimizer.kind = OptimizerConfig::Kind::Sgd;
        else
            throw DataError("config: unknown optimizer '" + kind + "'");
        cfg.optimizer.beta1 = o.value("beta1", cfg.optimizer.beta1);
        cfg.optimizer.beta2 = o.value("beta2", cfg.optimizer.beta2);
        cfg.optimizer.eps = o.value("eps", cfg.optimizer.eps);
    }
}

json write_train(const TrainConfig& cfg) {
    return json{{"learning_rate", cfg.learning_rate},
                {"batch_size", cfg.batch_size},
                {"max_epochs", cfg.max_epochs},
                {"seed", cfg.seed},
                {"optimizer",
                 {{"kind", cfg.optimizer.kind == OptimizerConfig::Kind::Adam ? "adam" : "sgd"},
                  {"beta1", cfg.optimizer.beta1},
                  {"beta2", cfg.optimizer.beta2},
                  {"eps", cfg.optimizer.eps}}}};
}

void read_boost(const json& j, BoostParams& p) {
    p.lambda = j.value("lambda", p.lambda);
    p.gamma = j.value("gamma", p.gamma);
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.rounds = j.value("rounds", p.rounds);
    p.min_child_hessian = j.value("min_child_hessian", p.min_child_hessian);
    p.seed = j.value("seed", p.seed);
}

json write_boost(const BoostParams& p) {
    return json{{"lambda", p.lambda},
                {"gamma", p.gamma},
                {"learning_rate", p.learning_rate},
                {"max_depth", p.max_depth},
                {"rounds", p.rounds},
                {"min_child_hessian", p.min_child_hessian},
                {"seed", p.seed}};
}

void read_stop(const json& j, EarlyStop& s) {
    s.eta = j.value("eta", s.eta);
    s.delta = j.value("delta", s.delta);
}

std::vector<Eigen::Index> read_sizes(const json& j) {
    std::vector<Eigen::Index> out;
    for (const auto& v : j) out.push_back(v.get<Eigen::Index>());
    return out;
}

} // namespace

void PipelineConfig::propagate_seed() {
    if (ae_train.seed == 0) ae_train.seed = seed;
    if (dec_train.seed == 0) dec_train.seed = seed + 1;
    if (fcnn_train.seed == 0) fcnn_train.seed = seed + 2;
    if (gbdt.seed == 0) gbdt.seed = seed + 3;
    if (meta.seed == 0) meta.seed = seed + 4;
}

PipelineConfig default_config() {
    PipelineConfig cfg;
    cfg.ae_train.learning_rate = 1e-3;
    cfg.ae_train.batch_size = 64;
    cfg.ae_train.max_epochs = 100;
    cfg.dec_train.learning_rate = 1e-3;
    cfg.dec_train.batch_size = 64;
    cfg.dec_train.max_epochs = 100;
    cfg.fcnn_train.learning_rate = 1e-3;
    cfg.fcnn_train.batch_size = 64;
    cfg.fcnn_train.max_epochs = 30;
    cfg.meta.rounds = 30;
    cfg.meta.min_child_hessian = 0.1;
    return cfg;
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig cfg = default_config();
    if (j.contains("ae")) {
        const auto& a = j.at("ae");
        cfg.ae.input_dim = a.value("input_dim", cfg.ae.input_dim);
        if (a.contains("hidden")) cfg.ae.hidden = read_sizes(a.at("hidden"));
        cfg.ae.latent_dim = a.value("latent_dim", cfg.ae.latent_dim);
        cfg.ae.corruption_rate = a.value("corruption_rate", cfg.ae.corruption_rate);
        if (a.contains("train")) read_train(a.at("train"), cfg.ae_train);
        if (a.contains("stop")) read_stop(a.at("stop"), cfg.ae_stop);
    }
    if (j.contains("dec")) {
        const auto& d = j.at("dec");
        if (d.contains("train")) read_train(d.at("train"), cfg.dec_train);
        if (d.contains("stop")) read_stop(d.at("stop"), cfg.cluster_stop);
    }
    if (j.contains("gbdt")) read_boost(j.at("gbdt"), cfg.gbdt);
    if (j.contains("meta")) {
        const auto& m = j.at("meta");
        read_boost(m, cfg.meta);
        cfg.meta_ratio = m.value("ratio", cfg.meta_ratio);
        cfg.shap_background_rows = m.value("background_rows", cfg.shap_background_rows);
    }
    if (j.contains("fcnn")) {
        const auto& f = j.at("fcnn");
        if (f.contains("hidden")) cfg.fcnn_hidden = read_sizes(f.at("hidden"));
        if (f.contains("train")) read_train(f.at("train"), cfg.fcnn_train);
    }
    if (j.contains("transfer")) {
        const auto& t = j.at("transfer");
        cfg.finetune_lr_scale = t.value("finetune_lr_scale", cfg.finetune_lr_scale);
        cfg.clf_finetune_rounds = t.value("clf_finetune_rounds", cfg.clf_finetune_rounds);
        if (t.contains("label_map"))
            cfg.label_map = t.at("label_map").get<std::map<std::string, std::string>>();
    }
    cfg.benign_label = j.value("benign_label", cfg.benign_label);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

json config_to_json(const PipelineConfig& cfg) {
    json hidden = json::array();
    for (auto h : cfg.ae.hidden) hidden.push_back(h);
    json fcnn_hidden = json::array();
    for (auto h : cfg.fcnn_hidden) fcnn_hidden.push_back(h);
    return json{
        {"ae",
         {{"input_dim", cfg.ae.input_dim},
          {"hidden", hidden},
          {"latent_dim", cfg.ae.latent_dim},
          {"corruption_rate", cfg.ae.corruption_rate},
          {"train", write_train(cfg.ae_train)},
          {"stop", {{"eta", cfg.ae_stop.eta}, {"delta", cfg.ae_stop.delta}}}}},
        {"dec",
         {{"train", write_train(cfg.dec_train)},
          {"stop", {{"eta", cfg.cluster_stop.eta}, {"delta", cfg.cluster_stop.delta}}}}},
        {"gbdt", write_boost(cfg.gbdt)},
        {"meta",
         [&] {
             json m = write_boost(cfg.meta);
             m["ratio"] = cfg.meta_ratio;
             m["background_rows"] = cfg.shap_background_rows;
             return m;
         }()},
        {"fcnn", {{"hidden", fcnn_hidden}, {"train", write_train(cfg.fcnn_train)}}},
        {"transfer",
         {{"finetune_lr_scale", cfg.finetune_lr_scale},
          {"clf_finetune_rounds", cfg.clf_finetune_rounds},
          {"label_map", cfg.label_map}}},
        {"benign_label", cfg.benign_label},
        {"seed", cfg.seed}};
}

PipelineConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError("config file '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

} // namespace odxu
