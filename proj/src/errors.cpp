#include "forge/errors.hpp"

namespace forge {

namespace {
std::string describe(const std::vector<std::string>& missing) {
  std::string msg = "workspace is missing stages:";
  for (const auto& s : missing) msg += " " + s;
  return msg;
}
}  // namespace

IncompleteWorkspaceError::IncompleteWorkspaceError(std::vector<std::string> missing)
    : ForgeError(describe(missing)), missing_(std::move(missing)) {}

}  // namespace forge
