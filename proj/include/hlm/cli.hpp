#ifndef HLM_CLI_HPP
#define HLM_CLI_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hlm {

// Exit-code contract, fixed for scripting:
//   0 success
//   2 codebook parse error
//   3 unmapped category under the error policy
//   4 estimation did not converge
//   5 spec/data mismatch, missing inputs, or other usage errors
struct RunManifest {
    std::string subcommand;
    std::string data_path;
    std::string codebook_path;
    std::string model_path;
    std::string null_model_path;
    std::string config_path;
    std::string preset;
    std::string cluster = "cluster";
    std::string format = "text";     // text | structured
    std::string out_path;            // empty = stdout
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool average_pv = false;
    std::vector<std::string> vars;   // diagnose
    std::vector<std::string> pv;     // pool
    double tau00 = 0.0, sigma2 = 0.0, n_bar = 0.0, n_total = 0.0;
    bool tau00_set = false, sigma2_set = false, n_bar_set = false, n_total_set = false;
};

// Full command-line front end. `args` excludes the program name.
// Reports go to `out` (or --out); diagnostics go to `err`. Nothing is
// written to --out on a nonzero exit.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hlm

#endif
