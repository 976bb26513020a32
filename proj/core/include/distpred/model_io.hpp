#ifndef DISTPRED_MODEL_IO_HPP
#define DISTPRED_MODEL_IO_HPP

#include <string>
#include <vector>

#include "distpred/dataset.hpp"
#include "distpred/lmgp.hpp"

namespace distpred {

// Everything needed to predict at raw-scale inputs: the fitted model plus
// the input schema (transform record) and category label mapping.
struct ModelBundle {
  FittedModel model;
  DatasetSchema schema;
  std::vector<std::string> category_names;

  int category_code(const std::string& label) const;  // throws if unseen
};

// Versioned JSON container. Doubles are written in shortest round-trip form,
// so deserialize(serialize(m)) reproduces every parameter bit-for-bit.
std::string serialize_model(const ModelBundle& bundle);
ModelBundle deserialize_model(const std::string& text);

void save_model(const std::string& path, const ModelBundle& bundle);
ModelBundle load_model(const std::string& path);

}  // namespace distpred

#endif
