// Command-line entry point; subcommands are wired in as the library lands.
int main() { return 0; }
