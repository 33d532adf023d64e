// dardkit <subcommand> --config path [--set key=value ...]

#include <CLI11.hpp>

#include <iostream>

#include "dardkit/commands.hpp"

namespace dk = dardkit;

int main(int argc, char** argv) {
    CLI::App app{"Adversarial robustness distillation toolkit"};
    app.set_version_flag("--version", std::string(dk::kToolVersion));
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"train", "train a model from scratch (strategy natural or sat)"},
        {"distill", "pretrain or load the teacher, then distil the student"},
        {"attack", "attack model.checkpoint on the test split and summarise"},
        {"eval", "evaluate model.checkpoint under the attack matrix"},
        {"report", "collect report.json files under output_dir into comparison.md"},
        {"ablate", "train dard, pgdard and onlyadv_ard students side by side"},
        {"pipeline", "teacher, distill and eval stages with manifest caching"},
        {"schema", "print every config key with its default"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        if (name != "schema") {
            sub->add_option("-c,--config", config_path, "YAML config file")->check(CLI::ExistingFile);
            sub->add_option("-s,--set", overrides, "override one key, e.g. --set attack.iterations=10");
        }
    }
    CLI11_PARSE(app, argc, argv);

    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        if (cmd == "schema") {
            std::cout << dk::to_yaml(dk::default_config());
            return 0;
        }
        const dk::RunConfig rc = dk::load_run_config(config_path, overrides);
        if (cmd == "train") {
            dk::cmd_train(rc);
        } else if (cmd == "distill") {
            dk::cmd_distill(rc);
        } else if (cmd == "attack") {
            std::cout << dk::cmd_attack(rc).dump(2) << "\n";
        } else if (cmd == "eval") {
            std::cout << dk::report_markdown(dk::cmd_eval(rc));
        } else if (cmd == "report") {
            std::cout << dk::cmd_report(rc);
        } else if (cmd == "ablate") {
            dk::cmd_ablate(rc);
            const auto bytes = dk::detail::read_file(rc.output_dir / "ablate" / "comparison.md");
            std::cout << std::string(bytes.begin(), bytes.end());
        } else if (cmd == "pipeline") {
            dk::cmd_pipeline(rc);
            const auto bytes = dk::detail::read_file(rc.output_dir / "eval" / "comparison.md");
            std::cout << std::string(bytes.begin(), bytes.end());
        }
    } catch (const dk::Error& e) {
        std::cerr << "dardkit " << cmd << ": " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "dardkit " << cmd << ": internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
