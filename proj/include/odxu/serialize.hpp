#pragma once

#include <iosfwd>
#include <string>

#include "odxu/dec.hpp"
#include "odxu/gbdt.hpp"
#include "odxu/net.hpp"

namespace odxu {

// Model containers, all little-endian with 64-bit floats:
//   ODXUNN1  dense networks (subtypes: plain, autoencoder, fcnn classifier)
//   ODXUDC1  DEC model: centroid matrix plus the embedded encoder blob
//   ODXUGB1  boosted tree ensemble: params block, then preorder node records
// Loaders reject wrong magics, subtypes, and truncated payloads with a
// diagnostic naming what was found.

void save_network(std::ostream& out, const Network& net);
Network load_network(std::istream& in);

void save_autoencoder(std::ostream& out, const Autoencoder& ae);
Autoencoder load_autoencoder(std::istream& in);

void save_fcnn(std::ostream& out, const FcnnClassifier& clf);
FcnnClassifier load_fcnn(std::istream& in);

void save_dec_model(std::ostream& out, const DecModel& model);
DecModel load_dec_model(std::istream& in);

void save_ensemble(std::ostream& out, const TreeEnsemble& model);
TreeEnsemble load_ensemble(std::istream& in);

enum class ModelKind { PlainNetwork, Autoencoder, Fcnn, Dec, Gbdt };
const char* model_kind_name(ModelKind k);

// Reads just enough of the file to classify it.
ModelKind peek_model_kind(const std::string& path);

// Path-level wrappers.
void save_autoencoder_file(const std::string& path, const Autoencoder& ae);
Autoencoder load_autoencoder_file(const std::string& path);
void save_fcnn_file(const std::string& path, const FcnnClassifier& clf);
FcnnClassifier load_fcnn_file(const std::string& path);
void save_dec_model_file(const std::string& path, const DecModel& model);
DecModel load_dec_model_file(const std::string& path);
void save_ensemble_file(const std::string& path, const TreeEnsemble& model);
TreeEnsemble load_ensemble_file(const std::string& path);

} // namespace odxu
