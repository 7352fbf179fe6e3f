# Services module for experiment campaigns
