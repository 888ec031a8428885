#!/usr/bin/env python3
"""
Configuration for the IaC compiler

This module contains all the tunable parameters for parsing, knowledge base
loading, code generation, planning and the dry-run simulator.
"""

# =============================================================================
# DEFAULT PATHS
# =============================================================================

# CLI defaults are relative to the working directory so fixtures run without flags
DEFAULT_KB_DIR = "./kb"
DEFAULT_TEMPLATES_DIR = "./templates"

# Shipped rules file, resolved relative to the scripts directory
DEFAULT_RULES_FILE = "rules/default.rules"

# =============================================================================
# EXIT CODES
# =============================================================================

EXIT_OK = 0
EXIT_VALIDATION = 1       # parse errors or validator Errors
EXIT_GENERATION = 2       # knowledge base, template, generation or planning errors
EXIT_SIM_FAILED = 3       # simulated run ended Failed or trace check found violations
EXIT_USAGE = 64           # bad flags, missing input files

# =============================================================================
# KNOWLEDGE BASE TABLES
# =============================================================================

# One tab-separated file per table, header row must match exactly
KB_TABLE_COLUMNS = {
    "os_pkg_mgr": ("id", "os_type", "os_version", "pkg_mgr"),
    "swdependency": ("id", "app_name"),
    "packages": ("id", "app_id", "sw_id", "apptype", "pkg_name", "pkg_mgr", "install_order"),
    "os_dependency": ("os_id", "app_sw_id"),
}

KB_FILE_SUFFIX = ".tsv"

# Package managers that must themselves be installed before they can install anything.
# Maps manager -> package names that bootstrap it.
PKG_MGR_BOOTSTRAP = {
    "pip": ("python-pip", "python3-pip"),
    "npm": ("npm", "nodejs"),
    "gem": ("ruby", "ruby-full"),
}

# =============================================================================
# CODE GENERATION
# =============================================================================

# Playbook module used for one install task per package manager
PKG_MGR_MODULES = {
    "apt": "apt",
    "yum": "yum",
    "dnf": "dnf",
    "pip": "pip",
    "choco": "win_chocolatey",
}

# Fallback module for package managers not listed above
DEFAULT_PKG_MODULE = "package"

# Provider command line invoked by generated provisioning scripts.
# Scripts honour CAMP_PROVIDER_CLI at run time so a stub can be swapped in.
PROVIDER_CLI = {
    "openstack": "openstack",
    "amazon": "aws",
    "azure": "az",
}

# Fields a provisioning script cannot be generated without
PROVIDER_REQUIRED_FIELDS = {
    "openstack": ("image_name",),
    "amazon": (),
    "azure": (),
}

# Per-provider command that removes one host, used by teardown scripts
PROVIDER_TEARDOWN = {
    "openstack": "server delete --wait",
    "amazon": "ec2 terminate-instances --instance-ids",
    "azure": "vm delete --yes --name",
}

# Template directory holding provision/teardown/hook script templates
PROVISION_TEMPLATE_DIR = "provision"

# Placeholders the generator fills itself; everything else comes from
# component attributes or the package resolution
GENERATOR_PLACEHOLDERS = ("hosts", "component_id", "platform_id", "os_type", "os_version")
RESOLUTION_PLACEHOLDERS = ("packages", "pkg_mgr")
PLACEHOLDER_SOURCES = ("attribute", "generator", "resolution")

# Checkout location for components with a `source` repository
GIT_CHECKOUT_ROOT = "/opt"

# Attribute names whose values are flagged as secrets in the bundle manifest
SECRET_ATTRIBUTES = ("db_root_pass", "db_pass", "password", "key_file")

# Hook scripts emitted for stateful migrations, in execution order
MIGRATION_HOOKS = ("lb_attach", "redirect", "checkpoint", "restore", "lb_detach")

# Suffix for the synthetic load balancer node created for a stateful migration
LB_NODE_SUFFIX = "_lb"

# Per-component generation runs on a small thread pool; output is merged by node id
GENERATION_WORKERS = 4

# =============================================================================
# DRY-RUN SIMULATOR
# =============================================================================

SIM_DEFAULT_SEED = 42

# Latency ranges in logical ticks, inclusive (min, max)
SIM_PROVISION_LATENCY = (20, 60)
SIM_SSH_READY_LATENCY = (5, 15)
SIM_TASK_LATENCY = (2, 10)

# How long an injected SshTimeout waits before the step fails
SIM_SSH_TIMEOUT_TICKS = 120

SIM_FAILURE_MODES = ("SshTimeout", "TaskFail")

# =============================================================================
# VALIDATION SETTINGS
# =============================================================================

def validate_config():
    """Validate configuration values"""
    exit_codes = [EXIT_OK, EXIT_VALIDATION, EXIT_GENERATION, EXIT_SIM_FAILED, EXIT_USAGE]
    if len(set(exit_codes)) != len(exit_codes):
        raise ValueError(f"Exit codes must be unique, got {exit_codes}")

    for name, bounds in [("SIM_PROVISION_LATENCY", SIM_PROVISION_LATENCY),
                         ("SIM_SSH_READY_LATENCY", SIM_SSH_READY_LATENCY),
                         ("SIM_TASK_LATENCY", SIM_TASK_LATENCY)]:
        low, high = bounds
        if low < 0 or high < low:
            raise ValueError(f"{name} must be a non-negative (min, max) range, got {bounds}")

    if SIM_SSH_TIMEOUT_TICKS <= 0:
        raise ValueError("SIM_SSH_TIMEOUT_TICKS must be positive")

    if not (set(PROVIDER_REQUIRED_FIELDS) == set(PROVIDER_CLI) == set(PROVIDER_TEARDOWN)):
        raise ValueError("PROVIDER_REQUIRED_FIELDS, PROVIDER_CLI and PROVIDER_TEARDOWN must cover the same providers")

    if set(GENERATOR_PLACEHOLDERS) & set(RESOLUTION_PLACEHOLDERS):
        raise ValueError("generator and resolution placeholders must not overlap")

    if GENERATION_WORKERS < 1:
        raise ValueError("GENERATION_WORKERS must be at least 1")

    for table, columns in KB_TABLE_COLUMNS.items():
        if not columns:
            raise ValueError(f"KB table {table} declares no columns")

# Validate on import
validate_config()

# =============================================================================
# UTILITY FUNCTIONS
# =============================================================================

def print_config_summary():
    """Print a summary of current configuration"""
    print("\n" + "=" * 80)
    print("IaC Compiler Configuration")
    print("=" * 80)

    print("\n📁 Default paths:")
    print(f"  Knowledge base:  {DEFAULT_KB_DIR}")
    print(f"  Templates:       {DEFAULT_TEMPLATES_DIR}")
    print(f"  Rules:           {DEFAULT_RULES_FILE}")

    print("\n🚦 Exit codes:")
    print(f"  ok={EXIT_OK} validation={EXIT_VALIDATION} generation={EXIT_GENERATION} "
          f"simulation={EXIT_SIM_FAILED} usage={EXIT_USAGE}")

    print("\n📦 Package manager modules:")
    for mgr, module in PKG_MGR_MODULES.items():
        print(f"  {mgr:<10} -> {module}")

    print("\n☁️  Provider CLIs:")
    for provider, cli in PROVIDER_CLI.items():
        required = ", ".join(PROVIDER_REQUIRED_FIELDS[provider]) or "-"
        print(f"  {provider:<10} {cli:<10} required: {required}")

    print("\n⏱️  Simulator latencies (ticks):")
    print(f"  Provision: {SIM_PROVISION_LATENCY[0]}-{SIM_PROVISION_LATENCY[1]}")
    print(f"  SSH ready: {SIM_SSH_READY_LATENCY[0]}-{SIM_SSH_READY_LATENCY[1]}")
    print(f"  Task:      {SIM_TASK_LATENCY[0]}-{SIM_TASK_LATENCY[1]}")
    print(f"  SSH timeout after {SIM_SSH_TIMEOUT_TICKS} ticks, default seed {SIM_DEFAULT_SEED}")

    print("=" * 80 + "\n")


if __name__ == "__main__":
    # Print config when run directly
    print_config_summary()
