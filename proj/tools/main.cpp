#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "countlab/common.hpp"
#include "tool_common.hpp"

int main(int argc, char** argv) {
    CLI::App app{
        "counting lab: synthetic counting scenes, a small trainable "
        "vision-language transformer, and the analysis tooling around it"};
    app.require_subcommand(1);

    countlab::register_gen(app);
    countlab::register_train(app);
    countlab::register_eval(app);
    countlab::register_interp(app);
    countlab::register_intervene(app);
    countlab::register_report(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const countlab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const countlab::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const countlab::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const countlab::ContractError& e) {
        std::fprintf(stderr, "contract violation: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
