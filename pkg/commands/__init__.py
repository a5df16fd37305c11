# Subcommand modules; each exposes a CommandRouter named `router`
