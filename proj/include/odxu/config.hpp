#pragma once

#include <json.hpp>
#include <map>
#include <string>

#include "odxu/gbdt.hpp"
#include "odxu/net.hpp"
#include "odxu/stopping.hpp"

namespace odxu {

// One JSON document with per-stage blocks drives every run; defaults follow
// the conventional settings the modules document. The whole document is
// embedded verbatim in run manifests.
struct PipelineConfig {
    AutoencoderSpec ae;                       // 1500 -> 512 -> 64 -> 12
    TrainConfig ae_train;
    TrainConfig dec_train;
    EarlyStop ae_stop{20, 5e-4};              // eta, delta_ae
    EarlyStop cluster_stop{20, 5e-3};         // eta, delta_cluster
    BoostParams gbdt;
    BoostParams meta;
    std::vector<Eigen::Index> fcnn_hidden = {1024, 512};
    TrainConfig fcnn_train;
    double finetune_lr_scale = 0.1;           // AE / cluster fine-tune stages
    int clf_finetune_rounds = 10;
    int shap_background_rows = 32;
    double meta_ratio = 5.0;
    std::string benign_label = "Benign";
    std::map<std::string, std::string> label_map; // target name -> source name
    std::uint64_t seed = 0;

    // Applies the global seed to every stage block that left seed at 0.
    void propagate_seed();
};

PipelineConfig default_config();
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config_file(const std::string& path);

} // namespace odxu
