#ifndef CTD_POLICY_IO_HPP
#define CTD_POLICY_IO_HPP

#include <string>

#include "ctd/policy.hpp"

namespace ctd {

// Weight file: one JSON document with a mandatory format_version field.
// Matrices are row-major nested arrays. Round trips are lossless.
void save_weights(const PolicyNet& net, const std::string& path);
PolicyNet load_weights(const std::string& path);

std::string weights_to_json(const PolicyNet& net);
PolicyNet weights_from_json(const std::string& text);

}  // namespace ctd

#endif
