#include <dxnet/dxnet.hpp>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dxnet::cli::run_cli(args);
}
