#include "catpol/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"catpol: categorical policies for model-based control"};
    app.require_subcommand(1);

    std::string path;
    int episodes = 10;
    bool stochastic = false;

    auto* train = app.add_subcommand("train", "train one policy per seed and write metrics and checkpoints");
    train->add_option("config", path, "run config file")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("checkpoint", path, "checkpoint file")->required();
    eval->add_option("--episodes", episodes, "number of evaluation episodes")->check(CLI::PositiveNumber);
    eval->add_flag("--stochastic", stochastic, "also report sampled rollouts");

    auto* estlab = app.add_subcommand("estlab", "compare gradient estimators on enumerable objectives");
    estlab->add_option("config", path, "estlab config file")->required();

    auto* sweep = app.add_subcommand("sweep", "train across factor/class cells");
    sweep->add_option("config", path, "sweep config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : catpol::kExitFormat;
    }

    if (*train)
        return catpol::cmd_train(path, std::cout, std::cerr);
    if (*eval)
        return catpol::cmd_eval(path, episodes, stochastic, std::cout, std::cerr);
    if (*estlab)
        return catpol::cmd_estlab(path, std::cout, std::cerr);
    return catpol::cmd_sweep(path, std::cout, std::cerr);
}
