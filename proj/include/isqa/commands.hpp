#pragma once

#include <ostream>
#include <string>

#include "isqa/config.hpp"

namespace isqa::commands {

struct Context {
  RunConfig config;
  std::string out;  // output root
  std::ostream* log = nullptr;
};

std::string data_dir(const Context& ctx);
std::string checkpoint_dir(const Context& ctx, const std::string& name);
std::string variant_name(Real a);

// Each writes resolved_config.txt into the output root. Those returning a
// string return a digest of what they wrote.
std::string gen_data(const Context& ctx);
void pretrain(const Context& ctx);
void train(const Context& ctx);
std::string eval(const Context& ctx);
std::string run_episode(const Context& ctx);
void serve(const Context& ctx);

std::string file_digest(const std::string& path);

}  // namespace isqa::commands
