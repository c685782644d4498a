#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lightde/bench.hpp"
#include "lightde/generator.hpp"
#include "lightde/parser.hpp"
#include "lightde/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lightde;

namespace {

// Exit codes: 0 success, 2 parse error, 3 validation error, 4 configuration
// error, 5 runtime fault.
constexpr int kExitParse = 2;
constexpr int kExitValidate = 3;
constexpr int kExitConfig = 4;
constexpr int kExitRuntimeFault = 5;

int load_module(const std::string& path, ir::Module& out) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    return kExitConfig;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    out = ir::parse_module(buf.str());
  } catch (const ir::ParseError& e) {
    std::cerr << path << ":" << e.what() << "\n";
    return kExitParse;
  }
  std::vector<std::string> problems = ir::validate(out);
  if (!problems.empty()) {
    for (const std::string& p : problems) std::cerr << path << ": " << p << "\n";
    return kExitValidate;
  }
  return 0;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  out << text;
}

bool parse_on_off(const std::string& v) { return v != "off"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LightDE: structure-sensitive points-to analysis and dangling-pointer "
               "elimination on a small LLVM-like IR"};
  app.require_subcommand(1);

  std::string input, out_path, metadata_path, report_path;
  std::string mode = "protected", stack_ptrs = "on", workload, sync = "on";
  std::uint32_t threads = 4;
  std::uint64_t seed = 1;
  std::uint32_t count = 10, max_instructions = 50;
  bool with_run = false;

  CLI::App* analyze = app.add_subcommand("analyze", "export stage-1/stage-2 points-to facts");
  analyze->add_option("input", input)->required();
  analyze->add_option("--out", out_path, "facts file (default: stdout)");

  CLI::App* emit = app.add_subcommand("emit", "build and serialize the pointer metadata");
  emit->add_option("input", input)->required();
  emit->add_option("--metadata", metadata_path, "output .ldem path")->required();
  emit->add_option("--stack-pointers", stack_ptrs, "on|off");

  CLI::App* run = app.add_subcommand("run", "interpret the module");
  run->add_option("input", input)->required();
  run->add_option("--mode", mode, "protected|unprotected");
  run->add_option("--metadata", metadata_path, ".ldem file (default: built in-process)");
  run->add_option("--report", report_path, "report file (default: stdout)");
  run->add_option("--stack-pointers", stack_ptrs, "on|off");
  run->add_option("--sync-sweep", sync, "on|off");

  CLI::App* stats = app.add_subcommand("stats", "static statistics table");
  stats->add_option("input", input)->required();
  stats->add_flag("--run", with_run, "append runtime columns from a protected run");

  CLI::App* check = app.add_subcommand("check-uaf", "compare protected and unprotected runs");
  check->add_option("input", input)->required();
  check->add_option("--report", report_path, "verdict file (default: stdout)");

  CLI::App* bench_cmd = app.add_subcommand("bench", "synthetic workload overhead");
  bench_cmd->add_option("--workload", workload, "alloc-heavy|pointer-dense|call-intensive")
      ->required();
  bench_cmd->add_option("--threads", threads);
  bench_cmd->add_option("--seed", seed);
  bench_cmd->add_option("--stack-pointers", stack_ptrs, "on|off");

  CLI::App* gen_cmd = app.add_subcommand("gen", "generate random corpus modules");
  gen_cmd->add_option("--seed", seed);
  gen_cmd->add_option("--count", count);
  gen_cmd->add_option("--out", out_path, "output directory")->required();
  gen_cmd->add_option("--max-instructions", max_instructions);

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) {
      ir::Module m;
      if (int rc = load_module(input, m)) return rc;
      pipeline::Products p = pipeline::build(m);
      write_or_print(out_path, pipeline::facts_text(m, p));
      for (const std::string& d : p.stage2.diagnostics()) std::cerr << "diag: " << d << "\n";
      return 0;
    }

    if (emit->parsed()) {
      ir::Module m;
      if (int rc = load_module(input, m)) return rc;
      pipeline::Products p = pipeline::build(m, parse_on_off(stack_ptrs));
      std::vector<std::uint8_t> bytes = meta::serialize_tables(p.table);
      std::ofstream out(metadata_path, std::ios::binary);
      if (!out) {
        std::cerr << "error: cannot write " << metadata_path << "\n";
        return kExitConfig;
      }
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
      std::cout << "wrote " << bytes.size() << " bytes, " << p.table.objects.size()
                << " objects\n";
      return 0;
    }

    if (run->parsed()) {
      ir::Module m;
      if (int rc = load_module(input, m)) return rc;
      if (mode != "protected" && mode != "unprotected") {
        std::cerr << "error: bad --mode\n";
        return kExitConfig;
      }
      bool prot = mode == "protected";
      pipeline::Products p = pipeline::build(m, parse_on_off(stack_ptrs));
      meta::ObjectPointerTable table = p.table;
      if (!metadata_path.empty()) {
        std::ifstream in(metadata_path, std::ios::binary);
        if (!in) {
          std::cerr << "error: cannot open " << metadata_path << "\n";
          return kExitConfig;
        }
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        table = meta::deserialize_tables(bytes);
      }
      interp::InterpOptions opt;
      opt.runtime.protected_mode = prot;
      opt.runtime.stack_hooks = parse_on_off(stack_ptrs);
      opt.runtime.sync_sweep = parse_on_off(sync);
      rt::ExecutionReport rep = interp::interp_run(m, p.objects, prot ? &table : nullptr, opt);
      write_or_print(report_path, rep.to_text());
      return rep.trapped ? kExitRuntimeFault : 0;
    }

    if (stats->parsed()) {
      ir::Module m;
      if (int rc = load_module(input, m)) return rc;
      pipeline::Products p = pipeline::build(m);
      pta::StatsRecord s = pta::emit_statistics(p.classes, m, p.objects);
      std::cout << s.to_text();
      if (with_run) {
        interp::InterpOptions opt;
        opt.runtime.protected_mode = true;
        rt::ExecutionReport rep = interp::interp_run(m, p.objects, &p.table, opt);
        std::cout << "runtime_alloc_obj_count " << rep.allocs << "\n"
                  << "runtime_free_obj_count " << rep.frees << "\n"
                  << "invalidated_pointer_count " << rep.sweep.nullified_total() << "\n";
      }
      return 0;
    }

    if (check->parsed()) {
      ir::Module m;
      if (int rc = load_module(input, m)) return rc;
      pipeline::Products p = pipeline::build(m);
      pipeline::UafCheck c = pipeline::check_uaf(m, p);
      write_or_print(report_path, c.to_text());
      return 0;
    }

    if (bench_cmd->parsed()) {
      bench::BenchOptions opt;
      opt.workload = workload;
      opt.threads = threads;
      opt.seed = seed;
      opt.stack_hooks = parse_on_off(stack_ptrs);
      try {
        bench::BenchResult r = bench::run_bench(opt);
        std::cout << r.to_text();
      } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
      }
      return 0;
    }

    if (gen_cmd->parsed()) {
      fs::create_directories(out_path);
      for (std::uint32_t i = 0; i < count; ++i) {
        gen::GenOptions opt;
        opt.seed = seed + i;
        opt.max_instructions = max_instructions;
        ir::Module m = gen::generate_module(opt);
        std::ofstream out(fs::path(out_path) / ("r" + std::to_string(seed + i) + ".lir"));
        out << ir::print_module(m);
      }
      std::cout << "wrote " << count << " modules to " << out_path << "\n";
      return 0;
    }
  } catch (const meta::MetadataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const interp::InterpError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
