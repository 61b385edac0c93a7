default_app_config = "project.core.apps.CoreConfig"
