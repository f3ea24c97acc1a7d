# Core configuration and utilities 