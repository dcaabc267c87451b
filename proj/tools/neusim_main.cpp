// CLI entry point; subcommands are registered as the pipeline modules land.
#include <cstdio>

int main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::fprintf(stderr, "neusim: no subcommands wired yet\n");
    return 2;
}
