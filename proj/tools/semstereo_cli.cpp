#include <cstdio>

int main() {
    std::printf("semstereo: subcommands not wired up yet\n");
    return 2;
}
